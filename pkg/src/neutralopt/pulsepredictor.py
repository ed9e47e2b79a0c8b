"""Training data from closed-loop runs and a chained boosted-tree pulse predictor."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .embedding import ConstraintViolation, LayoutKind, LayoutParams, Register, make_register
from .emulator import NOISE_OFF, PARAM_NAMES, NoiseParams, Pulse
from .gbr import GBRParams, TreeEnsemble, fit_gbr
from .graphcore import FEATURE_NAMES, CostKind, Graph, exact_solve, graph_features
from .pulseshaper import SELECTION_SHOTS, OptBudget, Selection, _measure, best_sampled, select_best, shape_pulse
from .seeding import derive_int, substream

LOGGER = logging.getLogger(__name__)

TARGET_NAMES = PARAM_NAMES
META_NAMES = ("graph_id", "layout", "kind", "ratio")
N_PULSE_POINTS = 5
# duration first, then Omega, then Delta
DEFAULT_ORDER = (8, 0, 1, 2, 3, 4, 5, 6, 7)
DEFAULT_HYPER = GBRParams(n_stages=100, learning_rate=0.1, max_depth=3)


class UntrainedModel(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainingInstance:
    features: tuple[float, ...]
    targets: tuple[float, ...]
    graph_id: str
    layout: str
    kind: str
    ratio: float

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(float(v) for v in self.features))
        object.__setattr__(self, "targets", tuple(float(v) for v in self.targets))
        if len(self.features) != len(FEATURE_NAMES) or len(self.targets) != len(TARGET_NAMES):
            raise ValueError("instance has the wrong feature or target dimension")
        if not all(math.isfinite(v) for v in (*self.features, *self.targets, self.ratio)):
            raise ValueError("instance contains non-finite values")


@dataclass
class Dataset:
    instances: list[TrainingInstance] = field(default_factory=list)
    feature_names: tuple[str, ...] = FEATURE_NAMES
    target_names: tuple[str, ...] = TARGET_NAMES

    def __len__(self):
        return len(self.instances)

    @property
    def X(self) -> np.ndarray:
        return np.array([i.features for i in self.instances], dtype=float).reshape(-1, len(self.feature_names))

    @property
    def Y(self) -> np.ndarray:
        return np.array([i.targets for i in self.instances], dtype=float).reshape(-1, len(self.target_names))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([*self.feature_names, *self.target_names, *META_NAMES])
        for inst in self.instances:
            w.writerow([*map(repr, inst.features), *map(repr, inst.targets), inst.graph_id, inst.layout, inst.kind, repr(inst.ratio)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Dataset":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise ValueError("empty dataset file")
        header, body = rows[0], rows[1:]
        nf, nt = len(FEATURE_NAMES), len(TARGET_NAMES)
        expected = [*FEATURE_NAMES, *TARGET_NAMES, *META_NAMES]
        if header != expected:
            raise ValueError(f"unexpected dataset header {header}")
        out = []
        for row in body:
            out.append(
                TrainingInstance(
                    tuple(map(float, row[:nf])),
                    tuple(map(float, row[nf : nf + nt])),
                    row[nf + nt],
                    row[nf + nt + 1],
                    row[nf + nt + 2],
                    float(row[nf + nt + 3]),
                )
            )
        return cls(out)

    def save(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    @classmethod
    def load(cls, path) -> "Dataset":
        with open(path, newline="") as fh:
            return cls.from_csv(fh.read())


def approximation_ratio(best_cost: float, opt_cost: float) -> float:
    """Ratio of the best found score to the optimum; both costs are non-positive."""
    if opt_cost == 0:
        return 1.0
    return float(best_cost / opt_cost)


def _one_instance(task):
    g, gid, layout, kind, budget, layout_params, shots, evolve_kwargs = task
    try:
        reg = make_register(g, layout, layout_params)
    except ConstraintViolation as exc:
        LOGGER.warning("skipping graph %s with layout %s: %s", gid, layout.value, exc)
        return None
    pulse, _ = shape_pulse(g, reg, kind, budget, NOISE_OFF, **evolve_kwargs)
    samples = _measure(reg, pulse, shots, NOISE_OFF, substream(budget.seed, "selection"), **evolve_kwargs)
    _, best = best_sampled(samples, g, kind)
    _, opt = exact_solve(g, kind)
    return TrainingInstance(
        graph_features(g, reg, N_PULSE_POINTS), tuple(pulse.to_vector()), gid, layout.value, kind.value, approximation_ratio(best, opt)
    )


def build_dataset(
    graphs: Sequence[Graph],
    layouts: Sequence[LayoutKind | str],
    kind: CostKind | str,
    budget: OptBudget | Callable[[int], OptBudget] | None = None,
    *,
    seed=None,
    graph_ids: Sequence[str] | None = None,
    layout_params: LayoutParams = LayoutParams(),
    selection_shots: int = SELECTION_SHOTS,
    workers: int = 1,
    **evolve_kwargs,
) -> Dataset:
    """Shape a pulse for every graph and layout; infeasible embeddings are skipped.

    Runs are noiseless. ``budget`` is an OptBudget, a callable from graph order
    to OptBudget, or None for 10n random starts and 50n calls. Its seed is
    replaced per task. Each task draws from its own named substream, so
    results do not depend on ``workers``.
    """
    kind = CostKind.parse(kind)
    layouts = [LayoutKind.parse(k) for k in layouts]
    ids = list(graph_ids) if graph_ids is not None else [str(i) for i in range(len(graphs))]
    tasks = []
    for gi, (g, gid) in enumerate(zip(graphs, ids)):
        for layout in layouts:
            if budget is None:
                b = OptBudget.scaled(g.n)
            elif callable(budget):
                b = budget(g.n)
            else:
                b = budget
            b = replace(b, seed=derive_int(seed, "optimizer", gi, layout.value))
            lp = replace(layout_params, seed=derive_int(seed, "layout", gi, layout.value))
            tasks.append((g, gid, layout, kind, b, lp, selection_shots, evolve_kwargs))
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one_instance, tasks))
    else:
        results = [_one_instance(t) for t in tasks]
    return Dataset([r for r in results if r is not None])


@dataclass
class ChainedModel:
    """Regressor chain: ensemble ``j`` sees the features plus the targets earlier in ``order``."""

    order: tuple[int, ...]
    ensembles: list[TreeEnsemble]
    n_features: int = len(FEATURE_NAMES)

    @property
    def n_targets(self) -> int:
        return len(self.order)

    def input_dims(self) -> list[int]:
        return [self.n_features + j for j in range(self.n_targets)]

    def predict(self, X) -> np.ndarray:
        """Targets in their natural index order; predecessors are the model's own predictions."""
        if len(self.ensembles) != len(self.order) or not self.ensembles:
            raise UntrainedModel("model has no fitted ensembles")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        aug = X
        out = np.empty((X.shape[0], self.n_targets))
        for t, model in zip(self.order, self.ensembles):
            col = model.predict(aug)
            out[:, t] = col
            aug = np.column_stack([aug, col])
        return out

    def to_dict(self) -> dict:
        return {"order": list(self.order), "n_features": self.n_features, "ensembles": [e.to_dict() for e in self.ensembles]}

    @classmethod
    def from_dict(cls, data) -> "ChainedModel":
        return cls(
            tuple(int(i) for i in data["order"]),
            [TreeEnsemble.from_dict(e) for e in data["ensembles"]],
            int(data.get("n_features", len(FEATURE_NAMES))),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "ChainedModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def fit_chain_arrays(X, Y, order: Sequence[int] | None = None, hyper: GBRParams = DEFAULT_HYPER) -> ChainedModel:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if len(X) == 0:
        raise ValueError("cannot fit on an empty dataset")
    order = tuple(range(Y.shape[1])) if order is None else tuple(int(i) for i in order)
    if sorted(order) != list(range(Y.shape[1])):
        raise ValueError(f"order {order} is not a permutation of the {Y.shape[1]} targets")
    ensembles = []
    aug = X
    for t in order:
        ensembles.append(fit_gbr(aug, Y[:, t], hyper))
        aug = np.column_stack([aug, Y[:, t]])  # teacher forcing
    return ChainedModel(order, ensembles, X.shape[1])


def fit_chain(d: Dataset, order: Sequence[int] = DEFAULT_ORDER, hyper: GBRParams = DEFAULT_HYPER) -> ChainedModel:
    if not len(d):
        raise ValueError("cannot fit on an empty dataset")
    return fit_chain_arrays(d.X, d.Y, order, hyper)


def predict_pulse(m: ChainedModel, g: Graph, reg: Register, n_points: int = N_PULSE_POINTS) -> Pulse:
    if m.n_targets != len(TARGET_NAMES):
        raise ValueError("pulse prediction needs a model over all nine pulse parameters")
    y = m.predict(graph_features(g, reg, n_points)[None, :])[0]
    return Pulse.clamped(y)


def random_registers(
    g: Graph,
    count: int,
    seed=None,
    layouts: Sequence[LayoutKind | str] = tuple(LayoutKind),
    params: LayoutParams = LayoutParams(),
    max_attempts: int | None = None,
) -> list[Register]:
    """``count`` feasible registers, each from a uniformly chosen layout kind and its own seed.

    Infeasible draws are replaced, up to ``max_attempts`` (default 10 per register).
    """
    kinds = [LayoutKind.parse(k) for k in layouts]
    rng = np.random.default_rng(substream(seed, "kinds"))
    out: list[Register] = []
    attempts = max_attempts if max_attempts is not None else 10 * count
    for i in range(attempts):
        if len(out) == count:
            break
        kind = kinds[int(rng.integers(len(kinds)))]
        try:
            out.append(make_register(g, kind, replace(params, seed=derive_int(seed, "register", i))))
        except ConstraintViolation as exc:
            LOGGER.debug("redrawing register %d (%s): %s", i, kind.value, exc)
    if len(out) < count:
        LOGGER.warning("only %d of %d registers are feasible after %d attempts", len(out), count, attempts)
    return out


def solve_with_model(
    m: ChainedModel,
    g: Graph,
    kind: CostKind | str,
    n_registers: int = 10,
    shots: int = SELECTION_SHOTS,
    noise: NoiseParams | None = None,
    seed=None,
    **evolve_kwargs,
) -> Selection:
    """Predict a pulse for each of several registers and keep the best sampled solution."""
    regs = random_registers(g, n_registers, substream(seed, "layout"))
    if not regs:
        raise ConstraintViolation("no feasible register for this graph")
    cands = [(r, predict_pulse(m, g, r)) for r in regs]
    return select_best(g, kind, cands, shots, noise, substream(seed, "sampler"), **evolve_kwargs)
