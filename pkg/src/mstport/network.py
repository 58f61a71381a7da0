"""Minimum spanning tree extraction and degree-centrality ranking.

The tree is grown with Prim's algorithm over the symmetric cost matrix.
Tie-breaking is fully deterministic: candidate edges are compared by
(cost, source ticker, destination ticker) and growth starts from the
lexicographically smallest ticker, so equal-cost inputs always yield the
same tree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .var_fevd import CostMatrix


@dataclass(frozen=True)
class MstTree:
    """Spanning tree: ``edges`` are (source, destination, cost) in discovery order."""

    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str, float], ...]
    total_cost: float

    def __post_init__(self) -> None:
        if len(self.edges) != max(len(self.nodes) - 1, 0):
            raise DataError("a spanning tree over N nodes needs exactly N-1 edges")


@dataclass(frozen=True)
class CentralityRanking:
    """Tickers ranked by tree degree, descending; ties lexicographic."""

    entries: tuple[tuple[str, int], ...]

    @property
    def tickers(self) -> tuple[str, ...]:
        return tuple(t for t, _ in self.entries)


def prim_mst(costs: CostMatrix) -> MstTree:
    """Grow the minimum spanning tree of the symmetric cost graph."""
    tickers = costs.tickers
    n = len(tickers)
    if n == 0:
        raise DataError("cannot build a tree over an empty ticker set")
    sym = costs.symmetric
    off_diag = ~np.eye(n, dtype=bool)
    if not np.all(np.isfinite(sym[off_diag])) and n > 1:
        raise DataError("non-finite off-diagonal cost")
    if n == 1:
        return MstTree(nodes=tickers, edges=(), total_cost=0.0)
    # Rank of each ticker in lexicographic order, used for tie-breaking.
    rank = np.empty(n, dtype=int)
    rank[np.argsort(np.array(tickers))] = np.arange(n)
    start = int(np.argmin(rank))
    in_tree = np.zeros(n, dtype=bool)
    in_tree[start] = True
    best_cost = sym[start].copy()
    best_src = np.full(n, start)
    edges: list[tuple[str, str, float]] = []
    total = 0.0
    for _ in range(n - 1):
        out = np.flatnonzero(~in_tree)
        cand_cost = best_cost[out]
        m = cand_cost.min()
        tied = out[cand_cost == m]
        if tied.size > 1:
            order = np.lexsort((rank[tied], rank[best_src[tied]]))
            v = int(tied[order[0]])
        else:
            v = int(tied[0])
        src = int(best_src[v])
        edges.append((tickers[src], tickers[v], float(best_cost[v])))
        total += float(best_cost[v])
        in_tree[v] = True
        # Relax the frontier through the new node; on equal cost prefer the
        # lexicographically smaller source ticker.
        new_cost = sym[v]
        better = (~in_tree) & (
            (new_cost < best_cost)
            | ((new_cost == best_cost) & (rank[v] < rank[best_src]))
        )
        best_cost[better] = new_cost[better]
        best_src[better] = v
    return MstTree(nodes=tickers, edges=tuple(edges), total_cost=total)


def degree_centrality(tree: MstTree) -> CentralityRanking:
    """Degree of each node in the tree, ranked descending."""
    degree = {t: 0 for t in tree.nodes}
    for u, v, _ in tree.edges:
        degree[u] += 1
        degree[v] += 1
    ranked = sorted(degree.items(), key=lambda kv: (-kv[1], kv[0]))
    return CentralityRanking(entries=tuple(ranked))


def select_top_k(ranking: CentralityRanking, k: int) -> tuple[str, ...]:
    """First min(k, N) tickers of the ranking."""
    if k < 1:
        raise ValueError("k must be at least 1")
    return ranking.tickers[:k]


def _dot_quote(name: str) -> str:
    return '"' + name.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_dot(tree: MstTree, sector_labels: dict[str, str] | None = None) -> str:
    """Render the tree as an undirected DOT graph.

    Sector labels, when provided, are emitted as node attributes; edge
    costs are emitted as ``weight`` attributes.
    """
    lines = ["graph mst {"]
    for node in tree.nodes:
        attrs = ""
        if sector_labels and node in sector_labels:
            attrs = f" [sector={_dot_quote(sector_labels[node])}]"
        lines.append(f"  {_dot_quote(node)}{attrs};")
    for u, v, cost in tree.edges:
        lines.append(f"  {_dot_quote(u)} -- {_dot_quote(v)} [weight={cost!r}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
