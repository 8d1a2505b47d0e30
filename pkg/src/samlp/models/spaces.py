"""Hyperparameter spaces and seeded sampling of unique configurations."""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Any

import numpy as np


def _round(x: float) -> float:
    # 6 significant digits keeps configs readable and hashable without losing range
    return float(f"{x:.6g}")


@dataclass(frozen=True)
class Choice:
    values: tuple

    def sample(self, rng):
        return self.values[int(rng.integers(len(self.values)))]

    @property
    def size(self):
        return len(self.values)

    def enumerate(self):
        return list(self.values)


@dataclass(frozen=True)
class IntRange:
    lo: int
    hi: int  # inclusive

    def sample(self, rng):
        return int(rng.integers(self.lo, self.hi + 1))

    @property
    def size(self):
        return self.hi - self.lo + 1

    def enumerate(self):
        return list(range(self.lo, self.hi + 1))


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def sample(self, rng):
        return _round(rng.uniform(self.lo, self.hi))

    size = math.inf


@dataclass(frozen=True)
class LogUniform:
    lo: float
    hi: float

    def sample(self, rng):
        return _round(math.exp(rng.uniform(math.log(self.lo), math.log(self.hi))))

    size = math.inf


@dataclass(frozen=True)
class Fixed:
    value: Any

    def sample(self, rng):
        return self.value

    size = 1

    def enumerate(self):
        return [self.value]


GBT_SPACE = {
    "max_depth": IntRange(2, 10),
    "learning_rate": LogUniform(0.01, 0.3),
    "n_estimators": Choice((50, 100, 200, 300, 500)),
    "subsample": Uniform(0.5, 1.0),
    "colsample_bytree": Uniform(0.5, 1.0),
    "min_child_weight": Choice((1, 3, 5, 10)),
    "gamma": Uniform(0.0, 5.0),
    "reg_lambda": LogUniform(0.1, 10.0),
    # replaced by n_negative / n_positive of the training rows, never sampled
    "scale_pos_weight": Fixed(1.0),
}

FOREST_SPACE = {
    "n_trees": IntRange(50, 500),
    "max_depth": Choice(tuple(range(4, 33)) + (None,)),
    "max_features": Choice(("sqrt", "log2", "all")),
    "min_samples_leaf": Choice((1, 2, 5, 10)),
    "bootstrap": Fixed(True),
}

SVM_SPACE = {
    "C": LogUniform(1e-3, 1e3),
    "epochs": Fixed(200),
}

SPACES = {"svm": SVM_SPACE, "random_forest": FOREST_SPACE, "gbt": GBT_SPACE}


def space_size(space: dict) -> float:
    total = 1
    for p in space.values():
        total *= p.size
    return total


def sample_params(space: dict, C: int, seed: int) -> list[dict]:
    """``C`` pairwise-distinct parameter dicts; the whole space if it has at most ``C`` points."""
    size = space_size(space)
    names = sorted(space)
    if size <= C:
        warnings.warn(f"hyperparameter space has only {size} configurations; returning all of them", stacklevel=3)
        combos = itertools.product(*(space[n].enumerate() for n in names))
        return [dict(zip(names, combo)) for combo in combos]
    rng = np.random.default_rng(seed)
    seen, out = set(), []
    attempts = 0
    while len(out) < C:
        attempts += 1
        if attempts > 1000 * C:
            warnings.warn(f"only found {len(out)} distinct configurations", stacklevel=3)
            break
        params = {n: space[n].sample(rng) for n in names}
        key = tuple((n, params[n]) for n in names)
        if key in seen:
            continue
        seen.add(key)
        out.append(params)
    return out
