"""Second-order gradient boosting of regression trees on the logistic loss."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forest import canonical_order
from .trees import TreeEnsemble, column_order, grow_boosted


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


def logit(p: float) -> float:
    p = min(max(p, 1e-6), 1 - 1e-6)
    return float(np.log(p / (1 - p)))


def boosting_weights(y, sample_weight, scale_pos_weight: float) -> np.ndarray:
    return np.asarray(sample_weight, dtype=np.float64) * np.where(np.asarray(y) == 1, scale_pos_weight, 1.0)


def weighted_logloss(margin, y, w) -> float:
    # log(1 + e^z) - y z, computed stably
    z = np.asarray(margin, dtype=np.float64)
    return float(np.sum(w * (np.logaddexp(0.0, z) - y * z)) / np.sum(w))


def _subsets(rng, count: int, n: int, k: int) -> np.ndarray:
    """``count`` sorted random k-subsets of range(n), one per row."""
    if k >= n:
        return np.tile(np.arange(n, dtype=np.int64), (count, 1))
    picks = np.argsort(rng.random((count, n)), axis=1)[:, :k]
    return np.sort(picks, axis=1).astype(np.int64)


@dataclass
class BoostedTrees:
    base_score: float  # on the margin (log-odds) scale
    trees: TreeEnsemble
    n_features: int

    @classmethod
    def fit(cls, X, y, sample_weight, *, n_estimators=100, max_depth=6, learning_rate=0.3,
            subsample=1.0, colsample_bytree=1.0, min_child_weight=1.0, gamma=0.0, reg_lambda=1.0,
            scale_pos_weight=1.0, seed=0) -> "BoostedTrees":
        order = canonical_order(X, y)
        X = np.ascontiguousarray(X[order], dtype=np.float64)
        y = np.asarray(y[order], dtype=np.float64)
        w = boosting_weights(y, np.asarray(sample_weight)[order], scale_pos_weight)
        n, m = X.shape
        rng = np.random.default_rng(seed)
        base = logit(float(np.sum(w * y) / np.sum(w)))
        n_rows = max(1, int(round(subsample * n)))
        n_cols = max(1, int(round(colsample_bytree * m)))
        n_est = int(n_estimators)
        if n_est == 0:
            return cls(base, TreeEnsemble(), m)
        row_sets = _subsets(rng, n_est, n, n_rows)
        col_sets = _subsets(rng, n_est, m, n_cols)
        arrays = grow_boosted(X, y, w, base, row_sets, col_sets, column_order(X), int(max_depth),
                              float(min_child_weight), float(reg_lambda), float(gamma), float(learning_rate))
        return cls(base, TreeEnsemble(*arrays), m)

    def margin(self, X, n_trees: int | None = None) -> np.ndarray:
        return self.base_score + self.trees.sum_leaves(X, n_trees)

    def scores(self, X, n_trees: int | None = None) -> np.ndarray:
        return sigmoid(self.margin(X, n_trees))

    def to_dict(self) -> dict:
        return {"base_score": self.base_score, "trees": self.trees.to_dict(), "n_features": self.n_features}

    @classmethod
    def from_dict(cls, d: dict) -> "BoostedTrees":
        return cls(d["base_score"], TreeEnsemble.from_dict(d["trees"]), d["n_features"])
