"""Historical VaR and Sharpe-ratio portfolio weighting.

VaR is the negated empirical alpha-quantile taken as an order statistic
(no interpolation).  Estimates are clipped into [0.001, 10.0]: a
non-positive VaR floors at 0.001 and a series shorter than the required
history is penalised with 10.0 so that thin histories receive near-zero
weight.  Weights are inverse-VaR or non-negative Sharpe ratios, normalised
to sum to one; an all-zero weight vector is legal and means "stay in cash".
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .market_data import ReturnMatrix

VAR_FLOOR = 0.001
VAR_PENALTY = 10.0
_SHARPE_MIN_STD = 1e-8


@dataclass(frozen=True)
class RiskEstimate:
    """Per-ticker risk numbers backing a weight vector."""

    ticker: str
    window_length: int
    var_value: float | None = None
    sharpe_value: float | None = None


@dataclass(frozen=True)
class WeightVector:
    """Per-ticker raw and normalised weights, in selection order."""

    entries: tuple[tuple[str, float, float], ...]

    def __post_init__(self) -> None:
        norms = [w for _, _, w in self.entries]
        if any(w < 0.0 for w in norms):
            raise DataError("normalised weights must be non-negative")
        total = math.fsum(norms)
        if total != 0.0 and abs(total - 1.0) > 1e-9:
            raise DataError("normalised weights must sum to one or be all zero")

    @property
    def tickers(self) -> tuple[str, ...]:
        return tuple(t for t, _, _ in self.entries)

    @property
    def normalized(self) -> tuple[float, ...]:
        return tuple(w for _, _, w in self.entries)

    def is_all_zero(self) -> bool:
        return all(w == 0.0 for _, _, w in self.entries)


def from_raw(tickers: tuple[str, ...] | list[str], raws: list[float]) -> WeightVector:
    """Normalise raw non-negative weights; all-zero stays all-zero."""
    if len(tickers) != len(raws):
        raise DataError("tickers and raw weights are misaligned")
    if any(not np.isfinite(r) or r < 0.0 for r in raws):
        raise DataError("raw weights must be finite and non-negative")
    total = math.fsum(raws)
    if total == 0.0:
        entries = tuple((t, 0.0, 0.0) for t in tickers)
    else:
        entries = tuple((t, float(r), float(r / total)) for t, r in zip(tickers, raws))
    return WeightVector(entries=entries)


def historical_var(series: np.ndarray, alpha: float, min_length: int | None = None) -> float:
    """Clipped historical value-at-risk of a return series.

    The raw estimate is minus the ceil(alpha * n)-th smallest return.  A
    series shorter than ``min_length`` yields the 10.0 penalty value; the
    result always lies in [0.001, 10.0].
    """
    if not 0.0 < alpha <= 0.5:
        raise DataError("alpha must lie in (0, 0.5]")
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise DataError("series must be a non-empty 1-d array")
    if not np.all(np.isfinite(x)):
        raise DataError("series contains non-finite values")
    n = x.size
    if min_length is not None and n < min_length:
        return VAR_PENALTY
    # Guard against float noise pushing alpha*n just above an integer.
    k = max(math.ceil(alpha * n - 1e-9), 1)
    quantile = np.sort(x)[k - 1]
    raw = -float(quantile)
    return min(max(raw, VAR_FLOOR), VAR_PENALTY)


def sharpe_ratio(series: np.ndarray, risk_free: float = 0.0) -> float:
    """Mean excess return over sample standard deviation (ddof=1)."""
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise DataError("sharpe ratio needs at least two observations")
    if not np.all(np.isfinite(x)):
        raise DataError("series contains non-finite values")
    std = float(np.std(x, ddof=1))
    if std < _SHARPE_MIN_STD:
        return 0.0
    return (float(np.mean(x)) - risk_free) / std


def _column(win: ReturnMatrix, ticker: str) -> tuple[np.ndarray, bool]:
    j = win.ticker_index(ticker)
    col = win.returns[:, j]
    clean = not bool(win.mask[:, j].any())
    return col, clean


def var_weights(
    stocks: tuple[str, ...] | list[str],
    win: ReturnMatrix,
    alpha: float,
    min_history: int | None = None,
) -> WeightVector:
    """Inverse-VaR weights over the window for the selected stocks.

    A stock with any masked cell in the window is treated as having
    insufficient history and receives the VaR penalty value.
    """
    if not stocks:
        raise DataError("cannot weight an empty stock set")
    required = min_history if min_history is not None else win.returns.shape[0]
    raws = []
    for ticker in stocks:
        col, clean = _column(win, ticker)
        if not clean:
            var = VAR_PENALTY
        else:
            var = historical_var(col, alpha, min_length=required)
        raws.append(1.0 / var)
    return from_raw(tuple(stocks), raws)


def sharpe_weights(
    stocks: tuple[str, ...] | list[str],
    win: ReturnMatrix,
    risk_free: float = 0.0,
) -> WeightVector:
    """Sharpe-proportional weights; negative ratios floor at zero.

    All ratios non-positive yields the all-zero vector (stay in cash).
    Stocks with masked cells in the window contribute zero weight.
    """
    if not stocks:
        raise DataError("cannot weight an empty stock set")
    raws = []
    for ticker in stocks:
        col, clean = _column(win, ticker)
        ratio = sharpe_ratio(col, risk_free) if clean else 0.0
        raws.append(max(ratio, 0.0))
    return from_raw(tuple(stocks), raws)
