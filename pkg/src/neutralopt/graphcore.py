"""Graphs, QUBO costs and classical baselines for MIS and MaxCut."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

EXACT_LIMIT = 20
DEFAULT_RANDOM_TRIALS = 1000


class CostKind(str, enum.Enum):
    MIS = "mis"
    MAXCUT = "maxcut"

    @classmethod
    def parse(cls, value: "CostKind | str") -> "CostKind":
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on vertices ``0..n-1``.

    Edges are stored as sorted ``(i, j)`` tuples with ``i < j``.
    """

    n: int
    edges: tuple[tuple[int, int], ...] = field(default=())

    def __post_init__(self):
        if self.n < 0:
            raise GraphError("vertex count must be non-negative")
        normalized = set()
        for e in self.edges:
            i, j = (int(e[0]), int(e[1]))
            if i == j:
                raise GraphError(f"self-loop on vertex {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise GraphError(f"edge {(i, j)} has an endpoint outside 0..{self.n - 1}")
            pair = (min(i, j), max(i, j))
            if pair in normalized:
                raise GraphError(f"duplicate edge {pair}")
            normalized.add(pair)
        object.__setattr__(self, "edges", tuple(sorted(normalized)))

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Sequence[int]]) -> "Graph":
        return cls(n, tuple(tuple(e) for e in edges))

    @property
    def size(self) -> int:
        return len(self.edges)

    @property
    def density(self) -> float:
        if self.n < 2:
            return 0.0
        return 2.0 * self.size / (self.n * (self.n - 1))

    @cached_property
    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=bool)
        for i, j in self.edges:
            a[i, j] = a[j, i] = True
        return a

    @cached_property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1).astype(int)

    @cached_property
    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(np.flatnonzero(row)) for row in self.adjacency)

    @cached_property
    def edge_array(self) -> np.ndarray:
        return np.array(self.edges, dtype=int).reshape(-1, 2)

    def relabel(self, perm: Sequence[int]) -> "Graph":
        """Return the graph with vertex ``v`` renamed to ``perm[v]``."""
        return Graph.from_edges(self.n, ((perm[i], perm[j]) for i, j in self.edges))

    def to_dict(self) -> dict:
        return {"n": self.n, "edges": [list(e) for e in self.edges]}

    @classmethod
    def from_dict(cls, data: dict) -> "Graph":
        return cls.from_edges(int(data["n"]), data.get("edges", []))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Graph":
        return cls.from_dict(json.loads(text))


def complete_graph(n: int) -> Graph:
    return Graph.from_edges(n, ((i, j) for i in range(n) for j in range(i + 1, n)))


def cycle_graph(n: int) -> Graph:
    return Graph.from_edges(n, ((i, (i + 1) % n) for i in range(n)))


def grid_graph(rows: int, cols: int) -> Graph:
    """Square lattice with row-major vertex numbering and nearest-neighbour edges."""
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges.append((v, v + 1))
            if r + 1 < rows:
                edges.append((v, v + cols))
    return Graph.from_edges(rows * cols, edges)


def hard_mis_graph() -> Graph:
    """Seven-vertex non-unit-disk graph whose unique MIS is {3, 4, 5}.

    Each of 3, 4, 5 is joined to all of 0, 1, 2, 6, which form a clique.
    """
    edges = [(o, i) for o in (3, 4, 5) for i in (0, 1, 2, 6)]
    edges += [(a, b) for a in (0, 1, 2, 6) for b in (0, 1, 2, 6) if a < b]
    return Graph.from_edges(7, edges)


def gen_erdos_renyi(n: int, p: float, seed=None) -> Graph:
    """G(n, p) via geometric skipping over the lower-triangle pair sequence.

    Runs in O(n + |E|) expected time.
    """
    if n < 1:
        raise GraphError("n must be at least 1")
    if not 0.0 <= p <= 1.0:
        raise GraphError("p must lie in [0, 1]")
    if p == 0.0 or n == 1:
        return Graph(n)
    if p == 1.0:
        return complete_graph(n)
    rng = np.random.default_rng(seed)
    lp = math.log1p(-p)
    edges = []
    v, w = 1, -1
    while v < n:
        skip = math.log1p(-rng.random()) / lp
        if skip >= n * n:  # past the last pair, also catches inf for tiny p
            break
        w += 1 + int(skip)
        while w >= v and v < n:
            w -= v
            v += 1
        if v < n:
            edges.append((w, v))
    return Graph.from_edges(n, edges)


def unit_disk_graph(positions, radius: float) -> Graph:
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    n = len(pos)
    d = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    iu, ju = np.triu_indices(n, k=1)
    keep = d[iu, ju] <= radius
    return Graph.from_edges(n, zip(iu[keep].tolist(), ju[keep].tolist()))


def gen_unit_disk(n: int, radius: float, box: float, seed=None) -> tuple[Graph, np.ndarray]:
    """Random geometric graph: ``n`` uniform points in a square box, edges at distance <= radius."""
    if n < 1 or radius <= 0 or box <= 0:
        raise GraphError("need n >= 1, radius > 0 and box > 0")
    rng = np.random.default_rng(seed)
    pos = rng.uniform(0.0, box, size=(n, 2))
    return unit_disk_graph(pos, radius), pos


def _as_bits(x, n: int) -> np.ndarray:
    if isinstance(x, str):
        bits = np.fromiter((int(c) for c in x), dtype=np.int64)
    else:
        bits = np.asarray(x, dtype=np.int64).ravel()
    if bits.shape[0] != n:
        raise GraphError(f"bitstring length {bits.shape[0]} does not match graph order {n}")
    if np.any((bits != 0) & (bits != 1)):
        raise GraphError("bitstring entries must be 0 or 1")
    return bits


def qubo_cost(g: Graph, x, kind: CostKind | str) -> int:
    """QUBO value of assignment ``x`` (sequence of 0/1 or a '0101' string).

    MIS: ``-sum x_i + sum_E x_i x_j``.
    MaxCut: ``-sum N(i) x_i + 2 sum_E x_i x_j`` which is minus the cut size; the
    quadratic sum counts each undirected edge in both orientations.
    """
    kind = CostKind.parse(kind)
    bits = _as_bits(x, g.n)
    if g.size:
        e = g.edge_array
        both = int(np.sum(bits[e[:, 0]] * bits[e[:, 1]]))
    else:
        both = 0
    if kind is CostKind.MIS:
        return int(-bits.sum() + both)
    return int(-(g.degrees * bits).sum() + 2 * both)


def cut_size(g: Graph, x) -> int:
    bits = _as_bits(x, g.n)
    return int(sum((bits[i] - bits[j]) ** 2 for i, j in g.edges))


def costs_of_indices(g: Graph, indices, kind: CostKind | str) -> np.ndarray:
    """Vectorised QUBO cost for basis-state indices (bit ``i`` of the index is vertex ``i``)."""
    kind = CostKind.parse(kind)
    idx = np.asarray(indices, dtype=np.int64)
    bits = (idx[..., None] >> np.arange(g.n, dtype=np.int64)) & 1
    lin = bits.sum(axis=-1) if kind is CostKind.MIS else bits @ g.degrees
    quad = np.zeros(idx.shape, dtype=np.int64)
    for i, j in g.edges:
        quad += bits[..., i] & bits[..., j]
    if kind is CostKind.MIS:
        return -lin + quad
    return -lin + 2 * quad


def exact_solve(g: Graph, kind: CostKind | str, limit: int = EXACT_LIMIT) -> tuple[tuple[int, ...], int]:
    """Global QUBO minimiser by depth-first branch and bound.

    Vertices are fixed in index order with the 0-branch first, so leaves are
    reached in lexicographic order and only strict improvements replace the
    incumbent: the lexicographically smallest minimiser is returned.
    """
    kind = CostKind.parse(kind)
    if g.n > limit:
        raise GraphError(f"graph order {g.n} exceeds the exact solver limit {limit}")
    if g.n == 0:
        return (), 0
    if kind is CostKind.MIS:
        return _mis_branch_and_bound(g)
    return _maxcut_branch_and_bound(g)


def _mis_branch_and_bound(g: Graph) -> tuple[tuple[int, ...], int]:
    n = g.n
    nbrs = g.neighbors
    x = [0] * n
    blocked = [0] * n  # number of selected neighbours among fixed vertices
    best = [1, None]  # incumbent cost, assignment; 1 > any reachable cost

    def bound(k: int, cost: int) -> int:
        # free vertices with no selected neighbour can each lower the cost by at most 1
        return cost - sum(1 for v in range(k, n) if blocked[v] == 0)

    def visit(k: int, cost: int):
        if k == n:
            if cost < best[0]:
                best[0], best[1] = cost, tuple(x)
            return
        if bound(k, cost) >= best[0]:
            return
        visit(k + 1, cost)
        x[k] = 1
        for u in nbrs[k]:
            blocked[u] += 1
        visit(k + 1, cost - 1 + blocked[k])
        for u in nbrs[k]:
            blocked[u] -= 1
        x[k] = 0

    visit(0, 0)
    return best[1], best[0]


def _maxcut_branch_and_bound(g: Graph) -> tuple[tuple[int, ...], int]:
    n = g.n
    nbrs = g.neighbors
    x = [0] * n
    side = [[0] * n, [0] * n]  # side[b][v]: fixed neighbours of v assigned b
    later = [sum(1 for u in nbrs[v] if u > v) for v in range(n)]
    best = [1, None]

    def bound(k: int, cut: int) -> int:
        extra = 0
        for v in range(k, n):
            extra += max(side[0][v], side[1][v]) + later[v]
        return -(cut + extra)

    def visit(k: int, cut: int):
        if k == n:
            if -cut < best[0]:
                best[0], best[1] = -cut, tuple(x)
            return
        if bound(k, cut) >= best[0]:
            return
        # complement symmetry: a lexicographically smallest optimum has x_0 = 0
        for b in ((0,) if k == 0 else (0, 1)):
            x[k] = b
            gain = side[1 - b][k]
            for u in nbrs[k]:
                side[b][u] += 1
            visit(k + 1, cut + gain)
            for u in nbrs[k]:
                side[b][u] -= 1
        x[k] = 0

    visit(0, 0)
    return best[1], best[0]


def random_baseline(g: Graph, kind: CostKind | str, trials: int = DEFAULT_RANDOM_TRIALS, seed=None) -> float:
    """Mean QUBO cost over uniformly random bitstrings."""
    if trials < 1:
        raise GraphError("trials must be at least 1")
    kind = CostKind.parse(kind)
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, size=(trials, g.n), dtype=np.int64)
    if g.size:
        e = g.edge_array
        quad = (bits[:, e[:, 0]] * bits[:, e[:, 1]]).sum(axis=1)
    else:
        quad = np.zeros(trials, dtype=np.int64)
    if kind is CostKind.MIS:
        costs = -bits.sum(axis=1) + quad
    else:
        costs = -(bits @ g.degrees) + 2 * quad
    return float(costs.mean())


def expected_random_cost(g: Graph, kind: CostKind | str) -> float:
    """Closed-form expectation of the QUBO cost under uniform random bits."""
    kind = CostKind.parse(kind)
    if kind is CostKind.MIS:
        return -g.n / 2 + g.size / 4
    return -g.size / 2


FEATURE_NAMES = (
    "order",
    "size",
    "density",
    "min_neighborhood",
    "max_neighborhood",
    "avg_neighborhood",
    "min_connected_distance",
    "max_connected_distance",
    "avg_connected_distance",
    "min_disjoint_distance",
    "max_disjoint_distance",
    "avg_disjoint_distance",
    "n_pulse_points",
)


def _stats(values: np.ndarray) -> tuple[float, float, float]:
    if values.size == 0:
        return 0.0, 0.0, 0.0
    return float(values.min()), float(values.max()), float(values.mean())


def graph_features(g: Graph, reg, n_points: int = 5) -> np.ndarray:
    """Fixed-length feature vector (see ``FEATURE_NAMES``) for a graph and its register."""
    pos = np.asarray(getattr(reg, "positions", reg), dtype=float).reshape(-1, 2)
    if len(pos) != g.n:
        raise GraphError(f"register has {len(pos)} atoms but the graph has {g.n} vertices")
    deg = g.degrees.astype(float)
    iu, ju = np.triu_indices(g.n, k=1)
    dist = np.linalg.norm(pos[iu] - pos[ju], axis=1)
    linked = g.adjacency[iu, ju]
    return np.array(
        [
            g.n,
            g.size,
            g.density,
            *_stats(deg),
            *_stats(dist[linked]),
            *_stats(dist[~linked]),
            n_points,
        ],
        dtype=float,
    )
