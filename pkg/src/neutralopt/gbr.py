"""Least-squares gradient boosting over depth-limited regression trees."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit


@njit(cache=True)
def _grow_tree(X, order, r, w, max_depth, min_leaf):
    """Level-wise greedy CART on presorted features with sample weights.

    Returns flat node arrays (feature, threshold, left, right, value); leaves
    have feature -1.
    """
    m, d = X.shape
    cap = (1 << (max_depth + 1)) - 1
    feature = -np.ones(cap, dtype=np.int64)
    threshold = np.zeros(cap)
    left = -np.ones(cap, dtype=np.int64)
    right = -np.ones(cap, dtype=np.int64)
    value = np.zeros(cap)
    node_of = np.zeros(m, dtype=np.int64)
    s_tot = np.zeros(cap)
    w_tot = np.zeros(cap)
    for i in range(m):
        s_tot[0] += w[i] * r[i]
        w_tot[0] += w[i]
    n_nodes = 1
    level_start = 0
    level_end = 1
    for depth in range(max_depth):
        best_gain = np.zeros(cap)
        best_feat = -np.ones(cap, dtype=np.int64)
        best_thr = np.zeros(cap)
        s_left = np.zeros(cap)
        w_left = np.zeros(cap)
        last_x = np.zeros(cap)
        seen = np.zeros(cap, dtype=np.bool_)
        for f in range(d):
            for v in range(level_start, level_end):
                s_left[v] = 0.0
                w_left[v] = 0.0
                seen[v] = False
            for k in range(m):
                i = order[f, k]
                if w[i] == 0.0:
                    continue
                v = node_of[i]
                if v < level_start or v >= level_end:
                    continue
                x = X[i, f]
                if seen[v] and x > last_x[v]:
                    wl = w_left[v]
                    wr = w_tot[v] - wl
                    if wl >= min_leaf and wr >= min_leaf:
                        sl = s_left[v]
                        sr = s_tot[v] - sl
                        gain = sl * sl / wl + sr * sr / wr - s_tot[v] * s_tot[v] / w_tot[v]
                        if gain > best_gain[v] + 1e-12 * (1.0 + abs(best_gain[v])):
                            best_gain[v] = gain
                            best_feat[v] = f
                            thr = 0.5 * (last_x[v] + x)
                            best_thr[v] = thr if thr < x else last_x[v]
                s_left[v] += w[i] * r[i]
                w_left[v] += w[i]
                last_x[v] = x
                seen[v] = True
        next_start = n_nodes
        for v in range(level_start, level_end):
            if best_feat[v] >= 0 and w_tot[v] > 0:
                feature[v] = best_feat[v]
                threshold[v] = best_thr[v]
                left[v] = n_nodes
                right[v] = n_nodes + 1
                n_nodes += 2
        if n_nodes == next_start:
            break
        for i in range(m):
            v = node_of[i]
            if feature[v] >= 0 and v >= level_start and v < level_end:
                if X[i, feature[v]] <= threshold[v]:
                    node_of[i] = left[v]
                else:
                    node_of[i] = right[v]
                s_tot[node_of[i]] += w[i] * r[i]
                w_tot[node_of[i]] += w[i]
        level_start = next_start
        level_end = n_nodes
    for v in range(n_nodes):
        if w_tot[v] > 0:
            value[v] = s_tot[v] / w_tot[v]
    return feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


@njit(cache=True)
def _predict_tree(X, feature, threshold, left, right, value):
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        v = 0
        while feature[v] >= 0:
            if X[i, feature[v]] <= threshold[v]:
                v = left[v]
            else:
                v = right[v]
        out[i] = value[v]
    return out


@dataclass
class RegressionTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        return _predict_tree(X, self.feature, self.threshold, self.left, self.right, self.value)

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {
                    "feature": int(f),
                    "threshold": float(t),
                    "left": int(lo),
                    "right": int(hi),
                    "value": float(v),
                }
                for f, t, lo, hi, v in zip(self.feature, self.threshold, self.left, self.right, self.value)
            ]
        }

    @classmethod
    def from_dict(cls, data) -> "RegressionTree":
        nodes = data["nodes"]
        return cls(
            np.array([nd["feature"] for nd in nodes], dtype=np.int64),
            np.array([nd["threshold"] for nd in nodes], dtype=float),
            np.array([nd["left"] for nd in nodes], dtype=np.int64),
            np.array([nd["right"] for nd in nodes], dtype=np.int64),
            np.array([nd["value"] for nd in nodes], dtype=float),
        )


def fit_tree(X, r, sample_weight=None, max_depth: int = 3, min_samples_leaf: float = 1.0, order=None) -> RegressionTree:
    X = np.ascontiguousarray(X, dtype=float)
    r = np.ascontiguousarray(r, dtype=float)
    w = np.ones(len(r)) if sample_weight is None else np.ascontiguousarray(sample_weight, dtype=float)
    if order is None:
        order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
    return RegressionTree(*_grow_tree(X, order, r, w, int(max_depth), float(min_samples_leaf)))


@dataclass(frozen=True)
class GBRParams:
    n_stages: int = 100
    learning_rate: float = 0.1
    max_depth: int = 3
    min_samples_leaf: float = 1.0


@dataclass
class TreeEnsemble:
    """``predict(X) = base + learning_rate * sum(tree(X) for tree in stages)``."""

    base: float
    learning_rate: float
    stages: list[RegressionTree] = field(default_factory=list)
    train_sel: list[float] = field(default_factory=list)

    @property
    def n_stages(self) -> int:
        return len(self.stages)

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=float)
        out = np.full(X.shape[0], self.base)
        for tree in self.stages:
            out += self.learning_rate * tree.predict(X)
        return out

    def to_dict(self) -> dict:
        return {"base": self.base, "lr": self.learning_rate, "trees": [t.to_dict() for t in self.stages]}

    @classmethod
    def from_dict(cls, data) -> "TreeEnsemble":
        return cls(float(data["base"]), float(data["lr"]), [RegressionTree.from_dict(t) for t in data["trees"]])


def fit_gbr(X, y, params: GBRParams = GBRParams(), sample_weight=None) -> TreeEnsemble:
    """Stage-wise least-squares boosting.

    Each stage fits a tree to the current residuals, so the training squared
    error never increases. A constant target yields a base-only model.
    """
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y have different row counts")
    if y.shape[0] < 2:
        raise ValueError("gradient boosting needs at least two training rows")
    w = np.ones_like(y) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    base = float(np.sum(w * y) / np.sum(w))
    model = TreeEnsemble(base, params.learning_rate)
    pred = np.full_like(y, base)
    model.train_sel.append(float(np.sum(w * (y - pred) ** 2)))
    if np.ptp(y[w > 0]) == 0.0:
        return model
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
    for _ in range(params.n_stages):
        tree = fit_tree(X, y - pred, w, params.max_depth, params.min_samples_leaf, order)
        pred = pred + params.learning_rate * tree.predict(X)
        model.stages.append(tree)
        model.train_sel.append(float(np.sum(w * (y - pred) ** 2)))
    return model
