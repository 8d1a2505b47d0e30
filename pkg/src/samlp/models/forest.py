"""Random forest: bootstrap bagging of class-weighted Gini CART trees."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .trees import TreeEnsemble, column_order, grow_forest


def resolve_max_features(spec, m: int) -> int:
    if spec in (None, "all"):
        return m
    if spec == "sqrt":
        return max(1, int(math.sqrt(m)))
    if spec == "log2":
        return max(1, int(math.log2(m))) if m > 1 else 1
    return max(1, min(int(spec), m))


def canonical_order(X, y) -> np.ndarray:
    """Row permutation sorting by (x_0, ..., x_{m-1}, y); makes fitting independent of input order."""
    keys = [y] + [X[:, j] for j in range(X.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


@dataclass
class RandomForest:
    trees: TreeEnsemble
    n_features: int

    @classmethod
    def fit(cls, X, y, sample_weight, *, n_trees=100, max_depth=None, max_features="sqrt",
            min_samples_leaf=1, bootstrap=True, seed=0) -> "RandomForest":
        order = canonical_order(X, y)
        X = np.ascontiguousarray(X[order], dtype=np.float64)
        y = np.ascontiguousarray(y[order], dtype=np.int64)
        w = np.asarray(sample_weight, dtype=np.float64)[order]
        n, m = X.shape
        col_order = column_order(X)
        rng = np.random.default_rng(seed)
        k = resolve_max_features(max_features, m)
        depth = -1 if max_depth is None else int(max_depth)
        n_trees = int(n_trees)
        counts = np.ones((n_trees, n), dtype=np.int64)
        seeds = np.zeros(n_trees, dtype=np.int64)
        for t in range(n_trees):
            if bootstrap:
                counts[t] = np.bincount(rng.integers(0, n, n), minlength=n)
            seeds[t] = rng.integers(0, 2**31 - 1)
        if n_trees == 0:
            return cls(TreeEnsemble(), m)
        arrays = grow_forest(X, y, w, counts, seeds, col_order, depth, int(min_samples_leaf), k)
        return cls(TreeEnsemble(*arrays), m)

    def scores(self, X) -> np.ndarray:
        return self.trees.vote_fraction(X)

    def to_dict(self) -> dict:
        return {"trees": self.trees.to_dict(), "n_features": self.n_features}

    @classmethod
    def from_dict(cls, d: dict) -> "RandomForest":
        return cls(TreeEnsemble.from_dict(d["trees"]), d["n_features"])
