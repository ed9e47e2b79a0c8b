"""Improved approximation ratio, baselines and the extrapolated Q-score."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .graphcore import CostKind, Graph, exact_solve, random_baseline
from .seeding import substream

BETA_THRESHOLD = 0.2
ASYMPTOTIC_LAMBDA = 0.178
DEFAULT_TAIL_START = 10
RESULT_COLUMNS = ("n", "quant_mean", "quant_std", "opt", "rand", "beta", "stderr")


class QScoreError(ValueError):
    pass


@dataclass(frozen=True)
class BetaPoint:
    n: int
    quant: float
    opt: float
    rand: float
    beta: float
    stderr: float
    quant_std: float = 0.0
    count: int = 1


@dataclass(frozen=True)
class QScoreFit:
    beta0: float
    n0: float
    window: tuple[int, int]
    qscore: float
    stderr_beta0: float = 0.0
    stderr_n0: float = 0.0

    def beta_at(self, n):
        return self.beta0 * np.exp(-np.asarray(n, dtype=float) / self.n0)

    def to_dict(self) -> dict:
        return {
            "beta0": self.beta0,
            "n0": self.n0,
            "qscore": self.qscore,
            "stderr_beta0": self.stderr_beta0,
            "stderr_n0": self.stderr_n0,
            "window": list(self.window),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def asymptotic_baselines(n: int) -> tuple[float, float]:
    """Large-n optimal and random cut sizes of G(n, 1/2)."""
    if n < 0:
        raise ValueError("n must be non-negative")
    rand = n * n / 8
    return rand + ASYMPTOTIC_LAMBDA * n**1.5, rand


def score(cost: float) -> float:
    """Score of a QUBO cost: larger is better, optimal MIS size or cut value at the optimum."""
    return -float(cost)


def empirical_baselines(
    graphs: Sequence[Graph], kind: CostKind | str, trials: int = 1000, seed=None
) -> tuple[float, float]:
    """Mean optimal score and mean random-guess score over a set of graphs."""
    if not graphs:
        raise ValueError("need at least one graph")
    opt = [score(exact_solve(g, kind)[1]) for g in graphs]
    rand = [score(random_baseline(g, kind, trials, substream(seed, "random", i))) for i, g in enumerate(graphs)]
    return float(np.mean(opt)), float(np.mean(rand))


def beta_value(quant: float, opt: float, rand: float) -> float:
    if opt == rand:
        raise QScoreError("degenerate baseline: opt equals rand")
    return (quant - rand) / (opt - rand)


def beta_curve(
    results: Mapping[int, Sequence[float]],
    baselines: Mapping[int, tuple[float, float]],
) -> tuple[list[BetaPoint], list[int]]:
    """Pointwise beta with the standard error of the mean quant score.

    ``results`` maps n to the per-graph quant scores; ``baselines`` maps n to
    (opt, rand). Returns the curve and the list of n whose baseline is
    degenerate, which are left out of the curve.
    """
    points, flagged = [], []
    for n in sorted(results):
        scores = np.asarray(results[n], dtype=float)
        if scores.size == 0:
            continue
        opt, rand = baselines[n]
        if opt == rand:
            flagged.append(n)
            continue
        mean = float(scores.mean())
        std = float(scores.std(ddof=1)) if scores.size > 1 else 0.0
        sem = std / math.sqrt(scores.size)
        points.append(BetaPoint(n, mean, opt, rand, beta_value(mean, opt, rand), sem / abs(opt - rand), std, int(scores.size)))
    return points, flagged


def fit_qscore(curve: Sequence[BetaPoint], n_lo: int = DEFAULT_TAIL_START) -> QScoreFit:
    """Least-squares fit of ``ln beta = ln beta0 - n / n0`` on the tail ``n >= n_lo``.

    A tail that never rises above the threshold and does not decay gives the
    window start as the Q-score.
    """
    tail = [p for p in curve if p.n >= n_lo and p.beta > 0]
    if len(tail) < 2:
        raise QScoreError(f"need at least two positive tail points with n >= {n_lo}, got {len(tail)}")
    n = np.array([p.n for p in tail], dtype=float)
    logb = np.log([p.beta for p in tail])
    A = np.column_stack([np.ones_like(n), n])
    coef, *_ = np.linalg.lstsq(A, logb, rcond=None)
    a, b = float(coef[0]), float(coef[1])
    window = (int(n.min()), int(n.max()))
    resid = logb - A @ coef
    dof = len(n) - 2
    if dof > 0:
        cov = float(resid @ resid) / dof * np.linalg.inv(A.T @ A)
        se_a, se_b = math.sqrt(max(cov[0, 0], 0.0)), math.sqrt(max(cov[1, 1], 0.0))
    else:
        se_a = se_b = 0.0
    beta0 = math.exp(a)
    if b >= -1e-12:
        if all(p.beta <= BETA_THRESHOLD + 1e-12 for p in tail):
            return QScoreFit(beta0, math.inf, window, float(window[0]), beta0 * se_a, math.inf)
        raise QScoreError("beta does not decay over the fit window; fitted n0 is not positive")
    n0 = -1.0 / b
    return QScoreFit(beta0, n0, window, n0 * math.log(beta0 / BETA_THRESHOLD), beta0 * se_a, se_b / (b * b))


def threshold_qscore(curve: Sequence[BetaPoint]) -> int:
    """Largest measured n with beta strictly above the threshold, 0 if none."""
    if not curve:
        raise ValueError("empty curve")
    above = [p.n for p in curve if p.beta > BETA_THRESHOLD]
    return max(above, default=0)


def curve_to_csv(curve: Sequence[BetaPoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for p in curve:
        w.writerow([p.n, repr(p.quant), repr(p.quant_std), repr(p.opt), repr(p.rand), repr(p.beta), repr(p.stderr)])
    return buf.getvalue()


def curve_from_csv(text: str) -> list[BetaPoint]:
    rows = list(csv.DictReader(io.StringIO(text)))
    return [
        BetaPoint(int(r["n"]), float(r["quant_mean"]), float(r["opt"]), float(r["rand"]), float(r["beta"]), float(r["stderr"]), float(r["quant_std"]))
        for r in rows
    ]
