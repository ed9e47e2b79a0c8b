"""Closed-loop pulse shaping with a boosted-tree surrogate."""

from __future__ import annotations

import csv
import enum
import io
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import qmc

from .embedding import ConstraintViolation, Register, RegisterTemplate, parametrized_register
from .emulator import (
    NOISE_OFF,
    PARAM_BOUNDS,
    NoiseParams,
    Pulse,
    SampleSet,
    bitstring_to_index,
    evolve,
    run_noisy,
    sample,
)
from .gbr import GBRParams, fit_gbr
from .seeding import spawn
from .graphcore import CostKind, Graph, costs_of_indices

LOGGER = logging.getLogger(__name__)

KAPPA = 1.96
N_CANDIDATES = 1000
N_SURROGATES = 5
SURROGATE_PARAMS = GBRParams(n_stages=40, learning_rate=0.1, max_depth=3)
SHOTS_PER_EVAL = 200
SELECTION_SHOTS = 1000
REALIZATIONS = 5


class ObjectiveKind(str, enum.Enum):
    AVERAGE = "average"
    BEST = "best"
    WORST = "worst"


@dataclass(frozen=True)
class OptBudget:
    random_starts: int
    total_calls: int
    shots_per_eval: int = SHOTS_PER_EVAL
    seed: int | None = None

    def __post_init__(self):
        if not self.total_calls >= self.random_starts >= 1:
            raise ValueError("need total_calls >= random_starts >= 1")

    @classmethod
    def scaled(cls, n: int, starts_per_atom: int = 10, calls_per_atom: int = 50, **kw) -> "OptBudget":
        return cls(starts_per_atom * n, calls_per_atom * n, **kw)


@dataclass
class OptTrace:
    params: list[np.ndarray] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)
    best_cost: list[float] = field(default_factory=list)

    def __len__(self):
        return len(self.objective)

    def record(self, x, value: float, solution_cost: float):
        prev = self.best_cost[-1] if self.best_cost else np.inf
        self.params.append(np.asarray(x, dtype=float).copy())
        self.objective.append(float(value))
        self.best_cost.append(float(min(prev, solution_cost)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "objective", "best_cost"])
        for i, (o, b) in enumerate(zip(self.objective, self.best_cost)):
            w.writerow([i, repr(o), repr(b)])
        return buf.getvalue()


def sample_costs(samples: SampleSet, g: Graph, kind: CostKind | str) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Bitstrings (sorted), their QUBO costs and counts."""
    bits = sorted(samples.counts)
    idx = np.array([bitstring_to_index(b) for b in bits], dtype=np.int64)
    costs = costs_of_indices(g, idx, kind)
    counts = np.array([samples.counts[b] for b in bits], dtype=float)
    return bits, costs, counts


def objective(samples: SampleSet, g: Graph, kind: CostKind | str, obj: ObjectiveKind | str = ObjectiveKind.AVERAGE) -> float:
    if not samples.counts:
        raise ValueError("objective of an empty sample set")
    obj = ObjectiveKind(obj)
    _, costs, counts = sample_costs(samples, g, kind)
    if obj is ObjectiveKind.AVERAGE:
        return float(np.dot(counts, costs) / counts.sum())
    if obj is ObjectiveKind.BEST:
        return float(costs.min())
    return float(costs.max())


def best_sampled(samples: SampleSet, g: Graph, kind: CostKind | str) -> tuple[str, int]:
    """Lowest-cost sampled bitstring; ties go to the lexicographically smallest."""
    bits, costs, _ = sample_costs(samples, g, kind)
    i = int(np.argmin(costs))  # bits are sorted, argmin takes the first minimum
    return bits[i], int(costs[i])


@dataclass
class MinimizeResult:
    x: np.ndarray
    fun: float
    trace: OptTrace
    xs: np.ndarray
    ys: np.ndarray


def minimize(
    func: Callable[[np.ndarray], float | tuple[float, float]],
    bounds: Sequence[tuple[float, float]],
    n_calls: int,
    n_random_starts: int,
    seed=None,
    *,
    kappa: float = KAPPA,
    n_candidates: int = N_CANDIDATES,
    n_models: int = N_SURROGATES,
    surrogate: GBRParams = SURROGATE_PARAMS,
) -> MinimizeResult:
    """Sequential model-based minimisation in a box.

    Latin-hypercube starts, then at each step a bag of boosted-tree models is
    fitted on bootstrap resamples of the history and the candidate with the
    lowest ``mean - kappa * spread`` among ``n_candidates`` uniform draws is
    evaluated next. ``func`` may return ``(value, solution_cost)``; otherwise
    the trace's best cost is the running minimum of the value.
    """
    if not n_calls >= n_random_starts >= 1:
        raise ValueError("need n_calls >= n_random_starts >= 1")
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    dim = len(lo)
    lhs_seed, cand_seed, bag_seed = spawn(seed, 3)
    rng = np.random.default_rng(cand_seed)
    bag_rng = np.random.default_rng(bag_seed)
    starts = qmc.LatinHypercube(d=dim, seed=np.random.default_rng(lhs_seed)).random(n_random_starts)
    units: list[np.ndarray] = []
    ys: list[float] = []
    trace = OptTrace()

    def evaluate(u: np.ndarray):
        x = lo + u * (hi - lo)
        out = func(x)
        value, sol = (out if isinstance(out, tuple) else (out, out))
        units.append(u)
        ys.append(float(value))
        trace.record(x, float(value), float(sol))

    for u in starts:
        evaluate(u)
    for _ in range(n_calls - n_random_starts):
        cands = rng.random((n_candidates, dim))
        y = np.array(ys)
        if np.ptp(y) == 0.0:
            evaluate(cands[0])
            continue
        U = np.array(units)
        preds = np.empty((n_models, n_candidates))
        m = len(y)
        for b in range(n_models):
            weights = bag_rng.multinomial(m, np.full(m, 1.0 / m)).astype(float)
            if np.ptp(y[weights > 0]) == 0.0:
                weights = np.ones(m)
            preds[b] = fit_gbr(U, y, surrogate, sample_weight=weights).predict(cands)
        acq = preds.mean(axis=0) - kappa * preds.std(axis=0)
        evaluate(cands[int(np.argmin(acq))])
    ys_arr = np.array(ys)
    best = int(np.argmin(ys_arr))
    xs = lo + np.array(units) * (hi - lo)
    return MinimizeResult(xs[best], float(ys_arr[best]), trace, xs, ys_arr)


def _measure(reg: Register, pulse: Pulse, shots: int, noise: NoiseParams, seed, **evolve_kwargs) -> SampleSet:
    if noise.enabled:
        per = max(1, shots // REALIZATIONS)
        return run_noisy(reg, pulse, noise, per, REALIZATIONS, seed, **evolve_kwargs)
    return sample(evolve(reg, pulse, **evolve_kwargs), shots, seed)


def shape_pulse(
    g: Graph,
    reg: Register,
    kind: CostKind | str,
    budget: OptBudget,
    noise: NoiseParams | None = None,
    obj: ObjectiveKind | str = ObjectiveKind.AVERAGE,
    **evolve_kwargs,
) -> tuple[Pulse, OptTrace]:
    """Optimise the nine pulse parameters against the sampled objective on one register."""
    noise = noise or NOISE_OFF
    opt_seed, shot_seed = spawn(budget.seed, 2)
    shot_streams = iter(shot_seed.spawn(budget.total_calls))

    def evaluate(x):
        pulse = Pulse.from_vector(x)
        samples = _measure(reg, pulse, budget.shots_per_eval, noise, next(shot_streams), **evolve_kwargs)
        _, best_cost = best_sampled(samples, g, kind)
        return objective(samples, g, kind, obj), best_cost

    res = minimize(evaluate, PARAM_BOUNDS, budget.total_calls, budget.random_starts, opt_seed)
    return Pulse.from_vector(res.x), res.trace


@dataclass
class EmbeddingResult:
    register: Register
    pulse: Pulse
    params: np.ndarray
    value: float
    trace: OptTrace


def shape_with_embedding(
    g: Graph,
    template: RegisterTemplate,
    kind: CostKind | str,
    outer_steps: int,
    inner_budget: OptBudget,
    noise: NoiseParams | None = None,
    outer_random_starts: int | None = None,
    seed=None,
    **evolve_kwargs,
) -> EmbeddingResult:
    """Search template parameters; each candidate register gets its own pulse-shaping run.

    Infeasible registers score 0. Every inner run reuses ``inner_budget.seed``
    so that registers are compared under the same random draws.
    """
    if outer_random_starts is None:
        outer_random_starts = max(1, min(outer_steps, 5))
    best: dict = {}

    def evaluate(params):
        try:
            reg = parametrized_register(template, params)
        except ConstraintViolation as exc:
            LOGGER.debug("skipping register: %s", exc)
            return 0.0, 0.0
        pulse, trace = shape_pulse(g, reg, kind, inner_budget, noise, **evolve_kwargs)
        value = float(min(trace.objective))
        if not best or value < best["value"]:
            best.update(register=reg, pulse=pulse, params=np.array(params), value=value)
        return value, trace.best_cost[-1]

    res = minimize(evaluate, template.bounds, outer_steps, outer_random_starts, seed)
    if not best:
        raise ConstraintViolation(f"no feasible register found for template {template.name}")
    return EmbeddingResult(best["register"], best["pulse"], best["params"], best["value"], res.trace)


@dataclass
class Selection:
    register: Register
    pulse: Pulse
    bitstring: str
    cost: int
    index: int


def select_best(
    g: Graph,
    kind: CostKind | str,
    candidates: Sequence[tuple[Register, Pulse]],
    shots: int = SELECTION_SHOTS,
    noise: NoiseParams | None = None,
    seed=None,
    **evolve_kwargs,
) -> Selection:
    """Sample every candidate and keep the one whose best sampled bitstring is cheapest."""
    if not candidates:
        raise ValueError("no candidates to select from")
    noise = noise or NOISE_OFF
    streams = spawn(seed, len(candidates))
    chosen = None
    for i, ((reg, pulse), ss) in enumerate(zip(candidates, streams)):
        samples = _measure(reg, pulse, shots, noise, ss, **evolve_kwargs)
        bits, cost = best_sampled(samples, g, kind)
        if chosen is None or cost < chosen.cost:
            chosen = Selection(reg, pulse, bits, cost, i)
    return chosen
