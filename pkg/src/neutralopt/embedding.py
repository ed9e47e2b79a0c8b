"""Atom registers from graphs: Fruchterman-Reingold layouts and device rescaling."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .graphcore import Graph
from .seeding import spawn

MIN_ATOM_DISTANCE = 4.0  # µm
MAX_RADIUS = 50.0  # µm
RANDOM_WEIGHT_RANGE = (0.1, 2.0)
ENERGY_TOL = 1e-6


class ConstraintViolation(ValueError):
    """No rescaling satisfies both the minimum-distance and maximum-radius bounds."""


class LayoutKind(str, enum.Enum):
    SPRING = "spring"
    RANDOM_WEIGHT_SPRING = "random"
    WEIGHTED_SPRING = "weighted"
    INVERSE_WEIGHT_SPRING = "inverse"

    @classmethod
    def parse(cls, value) -> "LayoutKind":
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


@dataclass(frozen=True)
class LayoutParams:
    iterations: int = 100
    area: float = 1.0
    scale: float = 40.0
    seed: int | None = None
    min_dist: float = MIN_ATOM_DISTANCE
    max_radius: float = MAX_RADIUS

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.scale <= 0 or self.area <= 0:
            raise ValueError("scale and area must be positive")


class Register:
    """Atom positions in µm, one row per graph vertex."""

    def __init__(self, positions):
        pos = np.array(positions, dtype=float).reshape(-1, 2)
        pos.setflags(write=False)
        self.positions = pos

    def __len__(self):
        return len(self.positions)

    def __repr__(self):
        return f"Register(n={len(self)})"

    @property
    def centroid(self) -> np.ndarray:
        return self.positions.mean(axis=0)

    def distances(self) -> np.ndarray:
        d = self.positions[:, None, :] - self.positions[None, :, :]
        return np.linalg.norm(d, axis=-1)

    def min_distance(self) -> float:
        return _min_pair_distance(self.positions)

    def max_radius(self) -> float:
        return float(np.linalg.norm(self.positions - self.centroid, axis=1).max(initial=0.0))

    def satisfies(self, min_dist=MIN_ATOM_DISTANCE, max_radius=MAX_RADIUS, tol=1e-9) -> bool:
        return self.min_distance() >= min_dist - tol and self.max_radius() <= max_radius + tol

    def subset(self, indices) -> "Register":
        return Register(self.positions[np.asarray(indices, dtype=int)])

    def to_dict(self) -> dict:
        return {"positions_um": self.positions.tolist()}

    @classmethod
    def from_dict(cls, data) -> "Register":
        return cls(data["positions_um"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Register":
        return cls.from_dict(json.loads(text))


def _min_pair_distance(pos: np.ndarray) -> float:
    if len(pos) < 2:
        return math.inf
    d = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    iu = np.triu_indices(len(pos), k=1)
    return float(d[iu].min())


def total_energy(g: Graph, pos: np.ndarray, k: float, weights: np.ndarray | None = None) -> float:
    """Sum of attractive terms over edges plus repulsive terms over ordered vertex pairs."""
    n = len(pos)
    if n < 2:
        return 0.0
    d = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    off = ~np.eye(n, dtype=bool)
    repulsive = -(k * k / np.maximum(d[off], 1e-12)).sum()
    if not g.size:
        return float(repulsive)
    e = g.edge_array
    w = np.ones(g.size) if weights is None else weights
    attractive = (w * d[e[:, 0], e[:, 1]] ** 2 / k).sum()
    return float(attractive + repulsive)


def _weight_vector(g: Graph, weights) -> np.ndarray:
    if weights is None:
        return np.ones(g.size)
    if isinstance(weights, Mapping):
        return np.array([weights.get(e, weights.get(e[::-1], 1.0)) for e in g.edges], dtype=float)
    w = np.asarray(weights, dtype=float)
    if w.shape != (g.size,):
        raise ValueError("weights must have one entry per edge")
    return w


def fr_layout(
    g: Graph,
    weights=None,
    params: LayoutParams = LayoutParams(),
    initial: np.ndarray | None = None,
    return_history: bool = False,
):
    """Fruchterman-Reingold force simulation in layout units.

    Attraction ``w * r**2 / k`` along edges, repulsion ``k**2 / r`` between all
    pairs, with ``k = sqrt(area / n)``. The displacement of each node per
    iteration is capped by a linearly decreasing temperature, and vertices are
    confined to a disc of the given area. Iteration stops
    at ``params.iterations`` or when the total energy changes by less than
    ``ENERGY_TOL``. Positions are returned centred on their centroid.
    """
    n = g.n
    if n < 1:
        raise ValueError("graph must have at least one vertex")
    rng = np.random.default_rng(params.seed)
    if initial is None:
        pos = rng.random((n, 2))
    else:
        pos = np.array(initial, dtype=float).reshape(n, 2)
    if n == 1:
        out = np.zeros((1, 2)) if initial is None else pos
        return (out, [0.0]) if return_history else out

    # forces depend only on differences; working in the centroid frame makes
    # translated starts follow the same trajectory
    pos = pos - pos.mean(axis=0)
    k = math.sqrt(params.area / n)
    t0 = 0.1 * math.sqrt(params.area)
    frame = math.sqrt(params.area / math.pi)
    w = _weight_vector(g, weights)
    e = g.edge_array
    history = [total_energy(g, pos, k, w)]
    for it in range(params.iterations):
        temp = t0 * (1.0 - it / params.iterations)
        delta = pos[:, None, :] - pos[None, :, :]
        dist = np.linalg.norm(delta, axis=-1)
        np.fill_diagonal(dist, 1.0)
        dist = np.maximum(dist, 1e-9)
        # repulsion pushes i away from j along delta_ij
        rep = (delta * (k * k / dist**2)[:, :, None]).sum(axis=1)
        disp = rep
        if g.size:
            de = pos[e[:, 0]] - pos[e[:, 1]]
            de_len = np.maximum(np.linalg.norm(de, axis=1), 1e-9)
            pull = de * (w * de_len / k)[:, None]
            att = np.zeros_like(pos)
            np.add.at(att, e[:, 0], -pull)
            np.add.at(att, e[:, 1], pull)
            disp = rep + att
        length = np.linalg.norm(disp, axis=1)
        step = np.minimum(length, temp) / np.maximum(length, 1e-12)
        pos = pos + disp * step[:, None]
        # vertices stay inside a disc of the given area around the start centroid
        rad = np.linalg.norm(pos, axis=1)
        out = rad > frame
        pos[out] *= (frame / rad[out])[:, None]
        history.append(total_energy(g, pos, k, w))
        if abs(history[-1] - history[-2]) < ENERGY_TOL:
            break
    pos = pos - pos.mean(axis=0)
    return (pos, history) if return_history else pos


def layout_weights(g: Graph, kind: LayoutKind | str, rng=None) -> np.ndarray:
    kind = LayoutKind.parse(kind)
    if kind is LayoutKind.SPRING:
        return np.ones(g.size)
    if kind is LayoutKind.RANDOM_WEIGHT_SPRING:
        rng = np.random.default_rng(rng)
        return rng.uniform(*RANDOM_WEIGHT_RANGE, size=g.size)
    deg = g.degrees
    w = np.array([deg[i] * deg[j] for i, j in g.edges], dtype=float)
    return w if kind is LayoutKind.WEIGHTED_SPRING else -w


def rescale_to_constraints(
    pos,
    min_dist: float = MIN_ATOM_DISTANCE,
    max_radius: float = MAX_RADIUS,
) -> Register:
    """Centre positions on their centroid and scale them onto the device limits.

    The feasible factors form ``[min_dist / d_min, max_radius / r_max]``. A
    layout already inside the limits is kept as is; otherwise the geometric
    midpoint of the interval is applied.
    """
    pts = np.asarray(pos, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("need at least one position")
    pts = pts - pts.mean(axis=0)
    if len(pts) == 1:
        return Register(pts)
    d_min = _min_pair_distance(pts)
    r_max = float(np.linalg.norm(pts, axis=1).max())
    if d_min <= 0:
        raise ConstraintViolation("coincident positions cannot be separated by rescaling")
    lo = min_dist / d_min
    hi = max_radius / r_max
    if lo > hi * (1 + 1e-12):
        raise ConstraintViolation(
            f"no scale satisfies min distance {min_dist} µm and max radius {max_radius} µm "
            f"(needs alpha >= {lo:.4g} and alpha <= {hi:.4g}); use a different embedding"
        )
    alpha = 1.0 if lo <= 1.0 <= hi else math.sqrt(lo * hi)
    return Register(pts * alpha)


def make_register(g: Graph, kind: LayoutKind | str = LayoutKind.SPRING, params: LayoutParams = LayoutParams()) -> Register:
    kind = LayoutKind.parse(kind)
    weight_seed, layout_seed = spawn(params.seed, 2)
    w = layout_weights(g, kind, np.random.default_rng(weight_seed))
    layout = LayoutParams(
        iterations=params.iterations,
        area=params.area,
        scale=params.scale,
        seed=np.random.default_rng(layout_seed).integers(2**63),
    )
    raw = fr_layout(g, w, layout)
    return rescale_to_constraints(raw * params.scale, params.min_dist, params.max_radius)


@dataclass(frozen=True)
class RegisterTemplate:
    """A register family ``params -> positions`` with box bounds on the parameters."""

    name: str
    build: Callable[[Sequence[float]], np.ndarray]
    bounds: tuple[tuple[float, float], ...]

    @property
    def arity(self) -> int:
        return len(self.bounds)


def concentric_triangles(params: Sequence[float]) -> np.ndarray:
    """Seven atoms: inner triangle (0,1,2) of circumradius r, outer triangle (3,4,5)
    of circumradius R rotated by 60 degrees, and atom 6 at the centre."""
    outer, inner = float(params[0]), float(params[1])
    ang = 2 * np.pi * np.arange(3) / 3
    tri_in = inner * np.column_stack([np.cos(ang), np.sin(ang)])
    tri_out = outer * np.column_stack([np.cos(ang + np.pi / 3), np.sin(ang + np.pi / 3)])
    return np.vstack([tri_in, tri_out, np.zeros((1, 2))])


CONCENTRIC_TRIANGLES = RegisterTemplate(
    name="concentric_triangles",
    build=concentric_triangles,
    bounds=((4.0, 12.0), (4.0, 10.0)),
)


def parametrized_register(
    template: RegisterTemplate,
    params: Sequence[float],
    min_dist: float = MIN_ATOM_DISTANCE,
    max_radius: float = MAX_RADIUS,
) -> Register:
    """Evaluate a template; raises ``ConstraintViolation`` when the result breaks device limits."""
    pos = np.asarray(template.build(params), dtype=float)
    pos = pos - pos.mean(axis=0)
    reg = Register(pos)
    if not reg.satisfies(min_dist, max_radius):
        raise ConstraintViolation(
            f"{template.name}{tuple(params)} gives min distance {reg.min_distance():.3g} µm "
            f"and radius {reg.max_radius():.3g} µm (limits {min_dist}, {max_radius})"
        )
    return reg
