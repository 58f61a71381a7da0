"""Command-line entry point: ingest, network, simulate, and report.

All outputs are deterministic: identical config and seeds produce
byte-identical files (no timestamps, sorted JSON keys, full-precision
floats).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, backtest, market_data, network, var_fevd
from .config import RunConfig, parse_config, parse_seeds, parse_strategies
from .errors import ConfigError, DataError, EstimationError, InsufficientHistory

log = logging.getLogger(__name__)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mstport",
        description="Influence-network portfolio engine",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="increase log level")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, desc in (
        ("ingest", "validate input data and print panel statistics"),
        ("network", "write per-window cost matrices and spanning trees"),
        ("simulate", "run strategy simulations and write result files"),
        ("report", "re-render summary tables from a finished run"),
    ):
        cmd = sub.add_parser(name, help=desc)
        cmd.add_argument("--config", required=(name != "report"), help="path to the run config file")
        cmd.add_argument("--out", help="output directory (overrides config)")
        if name in ("network", "simulate"):
            cmd.add_argument("--threads", type=int, default=1, help="worker pool size")
            cmd.add_argument("--rebalance-every", type=int, help="days between network rebuilds")
        if name == "simulate":
            cmd.add_argument("--seeds", help="seed list: '132', '99,103', or range '99..108'")
            cmd.add_argument("--strategies", help="comma-separated strategy names")
    return parser


def _apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    updates: dict = {}
    if getattr(args, "out", None):
        updates["out_dir"] = Path(args.out)
    if getattr(args, "threads", None):
        updates["threads"] = max(int(args.threads), 1)
    strategy_updates: dict = {}
    if getattr(args, "rebalance_every", None):
        strategy_updates["rebalance_every"] = int(args.rebalance_every)
    if getattr(args, "seeds", None):
        try:
            strategy_updates["seeds"] = parse_seeds(args.seeds)
        except ValueError as exc:
            raise ConfigError(f"--seeds: {exc}") from exc
    if getattr(args, "strategies", None):
        try:
            updates["strategies"] = parse_strategies(args.strategies)
        except ValueError as exc:
            raise ConfigError(f"--strategies: {exc}") from exc
    if strategy_updates:
        updates["strategy"] = dataclasses.replace(cfg.strategy, **strategy_updates)
    return dataclasses.replace(cfg, **updates) if updates else cfg


def _load_panel(cfg: RunConfig) -> tuple[market_data.PriceTable, market_data.PriceTable | None]:
    """Load the trading panel and, separately, the benchmark series table.

    The benchmark ticker is removed from the trading universe before the
    quality filter so index data never competes with stocks.
    """
    table = market_data.load_prices(cfg.prices_path, cfg.fmt)
    benchmark = None
    ticker = cfg.strategy.benchmark_ticker
    if cfg.benchmark_path is not None:
        benchmark = market_data.load_prices(cfg.benchmark_path, cfg.fmt)
        if ticker and ticker in benchmark.tickers:
            benchmark = market_data.select_tickers(benchmark, [ticker])
    elif ticker and ticker in table.tickers:
        benchmark = market_data.select_tickers(table, [ticker])
    if ticker and ticker in table.tickers:
        table = market_data.drop_tickers(table, [ticker])
    filtered = market_data.quality_filter(table, cfg.max_missing_frac)
    return filtered, benchmark


def _load_sectors(path: Path | None) -> dict[str, str] | None:
    if path is None:
        return None
    labels: dict[str, str] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if len(row) >= 2 and row[0].strip() and row[0].strip().lower() != "ticker":
                labels[row[0].strip()] = row[1].strip()
    return labels


def cmd_ingest(cfg: RunConfig) -> int:
    table, benchmark = _load_panel(cfg)
    returns = market_data.compute_returns(table)
    masked = int(table.mask.sum())
    print(f"dates: {len(table.dates)} ({table.dates[0]} .. {table.dates[-1]})")
    print(f"tickers kept (missing fraction < {cfg.max_missing_frac}): {len(table.tickers)}")
    print(f"masked cells: {masked} of {table.mask.size}")
    print(f"return rows: {len(returns.dates)}")
    print(f"opens present: {table.open_px is not None}")
    print(f"benchmark series: {'present' if benchmark is not None else 'absent'}")
    return 0


def cmd_network(cfg: RunConfig) -> int:
    table, _ = _load_panel(cfg)
    returns = market_data.compute_returns(table)
    strat = cfg.strategy
    n_returns = len(returns.dates)
    if n_returns < strat.window:
        raise InsufficientHistory("not enough return rows for one window")
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    sectors = _load_sectors(cfg.sectors_path)
    cost_rows: list[tuple[str, str, str, float]] = []
    n_windows = 0
    for tau in range(strat.window - 1, n_returns, strat.rebalance_every):
        win = market_data.window(returns, tau, strat.window)
        influence = var_fevd.influence_matrix(win, strat.horizon, strat.fevd_mode, n_jobs=cfg.threads)
        costs = var_fevd.to_cost(influence)
        tree = network.prim_mst(costs)
        window_end = win.dates[-1]
        cost_rows.extend(var_fevd.cost_records(costs, window_end))
        dot_path = out / f"mst_{window_end.isoformat()}.dot"
        dot_path.write_text(network.export_dot(tree, sectors), encoding="utf-8")
        n_windows += 1
    with open(out / "costs.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["window_end", "ticker_i", "ticker_j", "cost"])
        for stamp, ti, tj, cost in cost_rows:
            writer.writerow([stamp, ti, tj, repr(cost)])
    print(f"wrote {n_windows} windows to {out}")
    return 0


def _write_values_csv(path: Path, result: backtest.SimulationResult) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "portfolio_value"])
        for day, value in zip(result.dates, result.values):
            writer.writerow([day.isoformat(), repr(float(value))])


def _write_seeds_table(path: Path, summary: backtest.MultiSeedResult) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed"] + list(summary.strategies))
        for row, seed in enumerate(summary.seeds):
            writer.writerow([seed] + [repr(float(v)) for v in summary.returns_pct[row]])
        writer.writerow(["average"] + [repr(float(v)) for v in summary.means])


def _config_dict(cfg: RunConfig) -> dict:
    strat = dataclasses.asdict(cfg.strategy)
    strat["seeds"] = list(cfg.strategy.seeds)
    return {
        "prices": str(cfg.prices_path),
        "format": cfg.fmt,
        "benchmark_prices": str(cfg.benchmark_path) if cfg.benchmark_path else None,
        "sectors": str(cfg.sectors_path) if cfg.sectors_path else None,
        "max_missing_frac": cfg.max_missing_frac,
        "strategies": list(cfg.strategies),
        "fixed_weighting": cfg.fixed_weighting,
        "strategy": strat,
    }


def cmd_simulate(cfg: RunConfig) -> int:
    table, benchmark = _load_panel(cfg)
    strat = cfg.strategy
    if benchmark is not None and strat.benchmark_ticker:
        # Re-attach the benchmark column so the engine can slice it out.
        if benchmark.dates != table.dates:
            raise DataError("benchmark dates do not align with the trading panel")
        merged_tickers = table.tickers + (strat.benchmark_ticker,)
        closes = np.column_stack([table.adj_close, benchmark.adj_close[:, 0]])
        mask = np.column_stack([table.mask, benchmark.mask[:, 0]])
        opens = None
        if table.open_px is not None:
            bench_open = (
                benchmark.open_px[:, 0]
                if benchmark.open_px is not None
                else benchmark.adj_close[:, 0]
            )
            opens = np.column_stack([table.open_px, bench_open])
        order = np.argsort(merged_tickers)
        table = market_data.PriceTable(
            table.dates,
            tuple(merged_tickers[i] for i in order),
            closes[:, order],
            mask[:, order],
            opens[:, order] if opens is not None else None,
        )
    returns = market_data.compute_returns(table)
    summary = backtest.run_multi_seed(
        strat,
        table,
        returns,
        seeds=strat.seeds,
        strategies=cfg.strategies,
        fixed_weighting=cfg.fixed_weighting,
        n_jobs=cfg.threads,
    )
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    strategies_blob: dict = {}
    for name in summary.strategies:
        per_seed = {}
        for seed in summary.seeds:
            res = summary.results[(name, seed)]
            _write_values_csv(out / f"values_{name}_{seed}.csv", res)
            per_seed[str(seed)] = {
                "total_return_pct": res.total_return_pct,
                "trade_count": res.trade_count,
                "warnings": list(res.warnings),
            }
        col = summary.strategies.index(name)
        strategies_blob[name] = {
            "seeds": per_seed,
            "mean_total_return_pct": float(summary.means[col]),
        }
    blob = {
        "engine_version": __version__,
        "config_echo": cfg.raw_text,
        "config": _config_dict(cfg),
        "seeds": list(summary.seeds),
        "strategies": strategies_blob,
    }
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(blob, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_seeds_table(out / "seeds_table.csv", summary)
    print(f"wrote {len(summary.strategies)} strategies x {len(summary.seeds)} seeds to {out}")
    return 0


def cmd_report(out_dir: Path) -> int:
    summary_path = out_dir / "summary.json"
    if not summary_path.exists():
        raise ConfigError(f"no summary.json under {out_dir}")
    blob = json.loads(summary_path.read_text(encoding="utf-8"))
    strategies = list(blob["strategies"])
    seeds = [int(s) for s in blob["seeds"]]
    table = np.array(
        [
            [blob["strategies"][name]["seeds"][str(seed)]["total_return_pct"] for name in strategies]
            for seed in seeds
        ]
    )
    means = np.array([blob["strategies"][name]["mean_total_return_pct"] for name in strategies])
    summary = backtest.MultiSeedResult(
        seeds=tuple(seeds),
        strategies=tuple(strategies),
        returns_pct=table,
        means=means,
    )
    _write_seeds_table(out_dir / "seeds_table.csv", summary)
    width = max(len(n) for n in strategies) + 2
    print("total return (%) by strategy")
    for col, name in enumerate(strategies):
        print(f"  {name:<{width}} mean {means[col]:+9.4f}")
    return 0


def run(cfg: RunConfig, command: str) -> int:
    if command == "ingest":
        return cmd_ingest(cfg)
    if command == "network":
        return cmd_network(cfg)
    if command == "simulate":
        return cmd_simulate(cfg)
    raise ConfigError(f"unknown command {command!r}")


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "report":
            out_dir = Path(args.out) if args.out else None
            if args.config:
                cfg = parse_config(args.config)
                out_dir = out_dir or cfg.out_dir
            if out_dir is None:
                raise ConfigError("report needs --out or a config with an output dir")
            return cmd_report(out_dir)
        cfg = parse_config(args.config)
        cfg = _apply_overrides(cfg, args)
        return run(cfg, args.command)
    except (ConfigError, DataError, InsufficientHistory, EstimationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
