"""Stratified holdout, stratified K-fold and majority under-sampling.

All functions are pure in (inputs, seed). Index arrays returned are sorted
ascending so downstream slicing does not depend on shuffle order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ClassAbsentError, StratificationError


def _class_tally(y) -> dict[str, int]:
    y = np.asarray(y)
    return {str(int(c)): int(np.sum(y == c)) for c in np.unique(y)}


@dataclass(frozen=True)
class SplitIndices:
    train_idx: np.ndarray
    test_idx: np.ndarray
    seed: int
    ratio: float

    def to_dict(self, y=None) -> dict:
        d = {"seed": self.seed, "ratio": self.ratio,
             "train_idx": self.train_idx.tolist(), "test_idx": self.test_idx.tolist()}
        if y is not None:
            y = np.asarray(y)
            d["train_tally"] = _class_tally(y[self.train_idx])
            d["test_tally"] = _class_tally(y[self.test_idx])
        return d


@dataclass(frozen=True)
class FoldPlan:
    folds: tuple[np.ndarray, ...]
    seed: int

    @property
    def k(self) -> int:
        return len(self.folds)

    def split(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """(training indices, validation indices) for fold ``i``."""
        train = np.sort(np.concatenate([f for j, f in enumerate(self.folds) if j != i]))
        return train, self.folds[i]

    def __iter__(self):
        return (self.split(i) for i in range(self.k))

    def to_dict(self, y=None) -> dict:
        d = {"seed": self.seed, "k": self.k, "folds": [f.tolist() for f in self.folds]}
        if y is not None:
            y = np.asarray(y)
            d["tallies"] = [_class_tally(y[f]) for f in self.folds]
        return d


def stratified_holdout(y, ratio: float = 0.7, seed: int = 0) -> SplitIndices:
    """Split rows so each class keeps ``ratio`` of its rows in training.

    The per-class training count is ``ceil(ratio * n_c)``, clamped so that both
    sides keep at least one row of every class.
    """
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        if len(idx) < 2:
            raise StratificationError(f"class {c} has {len(idx)} sample(s); need at least 2")
        idx = rng.permutation(idx)
        # the 1e-9 guards against 0.7 * 70 == 49.000000000000004
        n_train = min(max(math.ceil(ratio * len(idx) - 1e-9), 1), len(idx) - 1)
        train.append(idx[:n_train])
        test.append(idx[n_train:])
    return SplitIndices(np.sort(np.concatenate(train)), np.sort(np.concatenate(test)), seed, ratio)


def stratified_kfold(indices, y, k: int = 5, seed: int = 0) -> FoldPlan:
    """Partition ``indices`` into ``k`` folds, stratified on ``y[indices]``.

    ``y`` is the full label vector that ``indices`` point into. Each class is
    shuffled and dealt round-robin; the dealing position carries over between
    classes so total fold sizes also stay within one of each other.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    indices = np.asarray(indices, dtype=np.int64)
    labels = np.asarray(y)[indices]
    rng = np.random.default_rng(seed)
    buckets: list[list[int]] = [[] for _ in range(k)]
    pos = 0
    for c in np.unique(labels):
        members = indices[labels == c]
        if len(members) < k:
            raise StratificationError(f"class {c} has {len(members)} samples, fewer than k={k}")
        for i in rng.permutation(members):
            buckets[pos % k].append(int(i))
            pos += 1
    return FoldPlan(tuple(np.sort(np.array(b, dtype=np.int64)) for b in buckets), seed)


def undersample_majority(indices, y, seed: int = 0) -> np.ndarray:
    """All minority rows plus an equal-sized uniform sample of the majority."""
    indices = np.asarray(indices, dtype=np.int64)
    labels = np.asarray(y)[indices]
    pos, neg = indices[labels == 1], indices[labels == 0]
    if len(pos) == 0 or len(neg) == 0:
        raise ClassAbsentError("under-sampling needs both classes")
    if len(pos) == len(neg):
        return np.sort(indices)
    minority, majority = (pos, neg) if len(pos) < len(neg) else (neg, pos)
    rng = np.random.default_rng(seed)
    picked = rng.choice(majority, size=len(minority), replace=False)
    return np.sort(np.concatenate([minority, picked]))
