"""Bivariate VAR(1) estimation and forecast error variance decomposition.

For every ordered stock pair the engine fits

    y_t = a0 + A1 y_{t-1} + u_t,        u_t ~ (0, sigma_u)

by per-equation ordinary least squares on the regressors
``[1, y_{i,t-1}, y_{j,t-1}]`` and decomposes the h-step forecast error
variance of each variable into shares attributable to the pair's two
shocks.  The share of variable j's uncertainty explained by variable i is
read as "influence of i on j" and mapped to an edge cost ``1 - share``.

Two decomposition modes are supported.  ``orthogonalized`` rotates shocks
through the lower-triangular Cholesky factor P of sigma_u, so each
variable's shares sum to one.  ``as_written`` uses the raw impulse
responses with no factor P in the numerator; its shares need not sum to
one and are clamped to [0, 1].  When sigma_u is not positive definite the
orthogonalized mode falls back to ``as_written`` and flags the result.

``influence_matrix`` evaluates all N(N-1)/2 pairs of a return window with
batched linear algebra; results are bit-identical regardless of chunking
or worker count because every pair is an independent fixed-order
computation.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DegenerateWindow, EstimationError, InsufficientHistory
from .market_data import ReturnMatrix

log = logging.getLogger(__name__)

MODE_ORTHOGONALIZED = "orthogonalized"
MODE_AS_WRITTEN = "as_written"
_MODES = (MODE_ORTHOGONALIZED, MODE_AS_WRITTEN)

# Relative eigenvalue threshold below which the centred lag Gram matrix is
# treated as rank deficient.
_RANK_RTOL = 1e-12
_CHUNK = 2048


@dataclass(frozen=True, eq=False)
class VarModel:
    """Fitted bivariate VAR(1): intercept a0 (2,), A1 (2,2), sigma_u (2,2)."""

    a0: np.ndarray
    a1: np.ndarray
    sigma_u: np.ndarray
    n_obs: int


@dataclass(frozen=True, eq=False)
class ImpulseResponseSet:
    """Impulse response matrices Phi_0 .. Phi_{h-1} with Phi_s = A1^s."""

    phis: np.ndarray  # (h, 2, 2)

    @property
    def horizon(self) -> int:
        return self.phis.shape[0]


@dataclass(frozen=True, eq=False)
class FevdResult:
    """2x2 variance shares; rows respond, columns source.

    ``fallback`` is True when an orthogonalized request degraded to the
    raw-numerator mode because sigma_u was not positive definite.
    """

    shares: np.ndarray
    fallback: bool = False


@dataclass(frozen=True, eq=False)
class InfluenceMatrix:
    """N x N influence shares; ``theta[j, i]`` = share of j's variance from i."""

    tickers: tuple[str, ...]
    theta: np.ndarray


@dataclass(frozen=True, eq=False)
class CostMatrix:
    """Directed and min-symmetrised edge costs derived from influence shares.

    ``directed[i, j]`` is the cost of the edge i -> j, i.e. one minus the
    influence of i on j.  Diagonals hold +inf as a self-edge sentinel.
    """

    tickers: tuple[str, ...]
    directed: np.ndarray
    symmetric: np.ndarray


def _centered_lags(y: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    lags = y[:-1]
    leads = y[1:]
    lbar = lags.mean(axis=0)
    fbar = leads.mean(axis=0)
    return lags - lbar, leads - fbar, lbar, fbar


def _min_max_eig2(g00: np.ndarray, g01: np.ndarray, g11: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalue range of symmetric 2x2 matrices, closed form."""
    tr = g00 + g11
    det = g00 * g11 - g01 * g01
    disc = np.sqrt(np.maximum(tr * tr - 4.0 * det, 0.0))
    return (tr - disc) / 2.0, (tr + disc) / 2.0


def fit_var1(pair: np.ndarray, min_window: int = 30) -> VarModel:
    """Fit a bivariate VAR(1) to a (w, 2) array of aligned return series.

    The residual covariance uses divisor ``n_obs - 3`` (three regressors
    per equation).  Raises :class:`DegenerateWindow` when the regressor
    matrix is rank deficient and :class:`InsufficientHistory` when the
    window is too short.
    """
    y = np.asarray(pair, dtype=float)
    if y.ndim != 2 or y.shape[1] != 2:
        raise DataError("pair window must have shape (w, 2)")
    w = y.shape[0]
    if w < max(min_window, 5):
        raise InsufficientHistory(f"window of {w} rows is below the minimum {max(min_window, 5)}")
    if not np.all(np.isfinite(y)):
        raise DataError("pair window contains masked or non-finite cells")
    lc, fc, lbar, fbar = _centered_lags(y)
    g = lc.T @ lc
    lam_min, lam_max = _min_max_eig2(g[0, 0], g[0, 1], g[1, 1])
    if lam_max <= 0.0 or lam_min <= _RANK_RTOL * lam_max:
        raise DegenerateWindow("constant or collinear series in pair window")
    b = np.linalg.solve(g, lc.T @ fc)  # rows: lag variable, cols: equation
    a1 = b.T
    a0 = fbar - a1 @ lbar
    resid = fc - lc @ b
    n_obs = w - 1
    if n_obs <= 3:
        raise InsufficientHistory("need more than four rows for the residual covariance")
    sigma = (resid.T @ resid) / (n_obs - 3)
    sigma = (sigma + sigma.T) / 2.0
    sigma[np.diag_indices_from(sigma)] = np.maximum(np.diag(sigma), 0.0)
    return VarModel(a0=a0, a1=a1, sigma_u=sigma, n_obs=n_obs)


def impulse_responses(model: VarModel, horizon: int) -> ImpulseResponseSet:
    """Powers of the companion matrix: Phi_s = A1^s for s = 0 .. horizon-1."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    phis = np.empty((horizon, 2, 2))
    phis[0] = np.eye(2)
    for s in range(1, horizon):
        phis[s] = phis[s - 1] @ model.a1
    return ImpulseResponseSet(phis=phis)


def _chol2_batch(sigma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form lower Cholesky factors for a (P, 2, 2) batch.

    Returns the factors and a boolean mask of batch members that are
    positive definite; non-PD members hold garbage in the factor slot.
    """
    s00 = sigma[..., 0, 0]
    s01 = sigma[..., 0, 1]
    s11 = sigma[..., 1, 1]
    with np.errstate(invalid="ignore", divide="ignore"):
        l00 = np.sqrt(np.maximum(s00, 0.0))
        l10 = np.where(l00 > 0.0, s01 / np.where(l00 > 0.0, l00, 1.0), 0.0)
        rem = s11 - l10 * l10
        l11 = np.sqrt(np.maximum(rem, 0.0))
    ok = (s00 > 0.0) & (rem > 0.0)
    chol = np.zeros_like(sigma)
    chol[..., 0, 0] = l00
    chol[..., 1, 0] = l10
    chol[..., 1, 1] = l11
    return chol, ok


def _fevd_batch(a1: np.ndarray, sigma: np.ndarray, horizon: int, mode: str) -> tuple[np.ndarray, np.ndarray]:
    """Variance shares for a batch of models; returns (shares, fallback_mask)."""
    n = a1.shape[0]
    if mode == MODE_ORTHOGONALIZED:
        chol, pd_ok = _chol2_batch(sigma)
        fallback = ~pd_ok
    else:
        chol = np.zeros_like(sigma)
        pd_ok = np.zeros(n, dtype=bool)
        fallback = np.zeros(n, dtype=bool)
    num_orth = np.zeros((n, 2, 2))
    num_raw = np.zeros((n, 2, 2))
    den = np.zeros((n, 2))
    phi = np.broadcast_to(np.eye(2), (n, 2, 2)).copy()
    for s in range(horizon):
        if s > 0:
            phi = phi @ a1
        if mode == MODE_ORTHOGONALIZED:
            m = phi @ chol
            num_orth += m * m
        num_raw += phi * phi
        phi_sigma = phi @ sigma
        den += np.einsum("prc,prc->pr", phi_sigma, phi)
    num = np.where(pd_ok[:, None, None], num_orth, num_raw)
    safe_den = np.where(den > 0.0, den, 1.0)
    shares = num / safe_den[:, :, None]
    # A zero denominator means the variable has no forecast error variance;
    # attribute everything to the variable itself.
    zero_rows = den <= 0.0
    if np.any(zero_rows):
        eye = np.broadcast_to(np.eye(2), (n, 2, 2))
        shares = np.where(zero_rows[:, :, None], eye, shares)
    return np.clip(shares, 0.0, 1.0), fallback


def fevd(model: VarModel, horizon: int, mode: str = MODE_ORTHOGONALIZED) -> FevdResult:
    """Forecast error variance shares at the given horizon.

    ``shares[j, i]`` is the fraction of variable j's h-step forecast error
    variance attributed to variable i.  In orthogonalized mode each row
    sums to one; in ``as_written`` mode the raw numerator is used and
    shares are clamped to [0, 1].
    """
    if mode not in _MODES:
        raise ValueError(f"unknown fevd mode {mode!r}")
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    a1 = model.a1[None, :, :]
    sigma = model.sigma_u[None, :, :]
    shares, fallback = _fevd_batch(a1, sigma, horizon, mode)
    used_fallback = bool(fallback[0]) and mode == MODE_ORTHOGONALIZED
    if used_fallback:
        log.debug("sigma_u not positive definite; fevd fell back to %s", MODE_AS_WRITTEN)
    return FevdResult(shares=shares[0], fallback=used_fallback)


def _pair_blocks(
    lc: np.ndarray,
    fc: np.ndarray,
    i_idx: np.ndarray,
    j_idx: np.ndarray,
    horizon: int,
    mode: str,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Estimate a chunk of pairs; returns (theta_ij, theta_ji, ok_mask).

    ``theta_ij[p]`` is the influence of pair p's first member on its
    second (share of j's variance from i); ``theta_ji`` the reverse.
    """
    t_obs = lc.shape[0]
    li = lc[:, i_idx]
    lj = lc[:, j_idx]
    fi = fc[:, i_idx]
    fj = fc[:, j_idx]
    g00 = np.einsum("ti,ti->i", li, li)
    g01 = np.einsum("ti,ti->i", li, lj)
    g11 = np.einsum("ti,ti->i", lj, lj)
    lam_min, lam_max = _min_max_eig2(g00, g01, g11)
    ok = (lam_max > 0.0) & (lam_min > _RANK_RTOL * lam_max)
    n_pairs = i_idx.size
    theta_ij = np.zeros(n_pairs)
    theta_ji = np.zeros(n_pairs)
    if not np.any(ok):
        return theta_ij, theta_ji, ok
    sel = np.flatnonzero(ok)
    g = np.empty((sel.size, 2, 2))
    g[:, 0, 0] = g00[sel]
    g[:, 0, 1] = g01[sel]
    g[:, 1, 0] = g01[sel]
    g[:, 1, 1] = g11[sel]
    c = np.empty((sel.size, 2, 2))  # rows: lag variable, cols: equation
    c[:, 0, 0] = np.einsum("ti,ti->i", li[:, sel], fi[:, sel])
    c[:, 0, 1] = np.einsum("ti,ti->i", li[:, sel], fj[:, sel])
    c[:, 1, 0] = np.einsum("ti,ti->i", lj[:, sel], fi[:, sel])
    c[:, 1, 1] = np.einsum("ti,ti->i", lj[:, sel], fj[:, sel])
    try:
        b = np.linalg.solve(g, c)
    except np.linalg.LinAlgError:
        # Near the rank threshold LAPACK may still flag exact singularity;
        # retry pair by pair so one bad pair does not sink the chunk.
        b = np.empty_like(c)
        keep = np.ones(sel.size, dtype=bool)
        for p in range(sel.size):
            try:
                b[p] = np.linalg.solve(g[p], c[p])
            except np.linalg.LinAlgError:
                keep[p] = False
        ok[sel[~keep]] = False
        sel = sel[keep]
        if sel.size == 0:
            return theta_ij, theta_ji, ok
        b = b[keep]
    a1 = np.swapaxes(b, 1, 2)
    lag_pair = np.stack((li[:, sel], lj[:, sel]), axis=2)  # (t, p, 2)
    lead_pair = np.stack((fi[:, sel], fj[:, sel]), axis=2)
    resid = lead_pair - np.einsum("tpr,prc->tpc", lag_pair, b)
    sse = np.einsum("tpr,tpc->prc", resid, resid)
    sigma = sse / (t_obs - 3)
    sigma = (sigma + np.swapaxes(sigma, 1, 2)) / 2.0
    diag = np.arange(2)
    sigma[:, diag, diag] = np.maximum(sigma[:, diag, diag], 0.0)
    shares, _ = _fevd_batch(a1, sigma, horizon, mode)
    theta_ji[sel] = shares[:, 1, 0]  # influence of i on j
    theta_ij[sel] = shares[:, 0, 1]  # influence of j on i
    return theta_ij, theta_ji, ok


def influence_matrix(
    win: ReturnMatrix,
    horizon: int,
    mode: str = MODE_ORTHOGONALIZED,
    n_jobs: int = 1,
) -> InfluenceMatrix:
    """All-pairs influence shares over one return window.

    Pairs whose estimation fails (masked cells, constant or collinear
    series) contribute zero influence in both directions.  Raises
    :class:`EstimationError` if every pair fails.
    """
    if mode not in _MODES:
        raise ValueError(f"unknown fevd mode {mode!r}")
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    n = len(win.tickers)
    if n < 2:
        raise DataError("influence matrix needs at least two tickers")
    w = win.returns.shape[0]
    if w < 5:
        raise InsufficientHistory("window too short for VAR estimation")
    usable = ~win.mask.any(axis=0)
    y = np.where(usable[None, :], win.returns, 0.0)
    y = np.nan_to_num(y, nan=0.0)
    lc, fc, _, _ = _centered_lags(y)
    iu, ju = np.triu_indices(n, k=1)
    pair_ok = usable[iu] & usable[ju]
    iu, ju = iu[pair_ok], ju[pair_ok]
    theta = np.zeros((n, n))
    if iu.size == 0:
        raise EstimationError("no estimable pairs in window")
    chunks = [slice(s, min(s + _CHUNK, iu.size)) for s in range(0, iu.size, _CHUNK)]

    def run_chunk(sl: slice) -> tuple[slice, np.ndarray, np.ndarray, np.ndarray]:
        t_ij, t_ji, ok = _pair_blocks(lc, fc, iu[sl], ju[sl], horizon, mode)
        return sl, t_ij, t_ji, ok

    if n_jobs > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(run_chunk, chunks))
    else:
        results = [run_chunk(sl) for sl in chunks]
    any_ok = False
    failed = 0
    for sl, t_ij, t_ji, ok in results:
        theta[ju[sl], iu[sl]] = t_ji
        theta[iu[sl], ju[sl]] = t_ij
        any_ok = any_ok or bool(np.any(ok))
        failed += int(np.sum(~ok))
    if not any_ok:
        raise EstimationError("every pair estimation failed in window")
    if failed:
        log.debug("influence_matrix: %d degenerate pairs set to zero influence", failed)
    return InfluenceMatrix(tickers=win.tickers, theta=theta)


def to_cost(influence: InfluenceMatrix) -> CostMatrix:
    """Map influence shares to edge costs.

    Directed cost of i -> j is ``1 - theta[j, i]``; the symmetric cost is
    the minimum of the two directions.  Diagonals are +inf sentinels.
    """
    theta = influence.theta
    if np.any((theta < 0.0) | (theta > 1.0)):
        raise DataError("influence shares must lie in [0, 1]")
    directed = 1.0 - theta.T
    np.fill_diagonal(directed, np.inf)
    symmetric = np.minimum(directed, directed.T)
    np.fill_diagonal(symmetric, np.inf)
    return CostMatrix(tickers=influence.tickers, directed=directed, symmetric=symmetric)


def cost_records(cost: CostMatrix, window_end) -> list[tuple[str, str, str, float]]:
    """Rows ``(window_end, ticker_i, ticker_j, cost)`` for the audit dump."""
    rows = []
    stamp = window_end.isoformat()
    n = len(cost.tickers)
    for i in range(n):
        for j in range(i + 1, n):
            rows.append((stamp, cost.tickers[i], cost.tickers[j], float(cost.symmetric[i, j])))
    return rows
