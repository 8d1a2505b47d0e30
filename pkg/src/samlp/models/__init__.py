"""Classifier families behind one contract: ``train`` then ``predict_scores``.

* ``svm`` scores are signed margins (decision at 0),
* ``random_forest`` scores are the fraction of trees voting bot,
* ``gbt`` scores are probabilities.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Any

import numpy as np

from .. import seeding
from ..errors import ClassAbsentError, SchemaMismatchError, TrainingError
from .forest import RandomForest
from .gbt import BoostedTrees
from .spaces import SPACES, sample_params
from .svm import LinearSVM

FAMILIES = ("svm", "random_forest", "gbt")
MODEL_FORMAT = 1
_ESTIMATORS = {"svm": LinearSVM, "random_forest": RandomForest, "gbt": BoostedTrees}


@dataclass(frozen=True)
class ModelConfig:
    family: str
    params: tuple  # sorted (name, value) pairs
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown model family {self.family!r}")

    @classmethod
    def make(cls, family: str, seed: int = 0, **params) -> "ModelConfig":
        return cls(family, tuple(sorted(params.items())), seed)

    @property
    def hyper(self) -> dict[str, Any]:
        return dict(self.params)

    @property
    def key(self) -> str:
        """Content hash of family + hyperparameters (the seed is not part of identity)."""
        blob = json.dumps({"family": self.family, "params": self.hyper}, sort_keys=True)
        return hashlib.sha1(blob.encode()).hexdigest()[:16]

    def complexity(self) -> tuple:
        h = self.hyper
        n = h.get("n_estimators", h.get("n_trees", 0))
        depth = h.get("max_depth", 0)
        return (n, 10**6 if depth is None else depth)

    def with_params(self, **updates) -> "ModelConfig":
        h = self.hyper
        h.update(updates)
        return ModelConfig.make(self.family, self.seed, **h)

    def to_dict(self) -> dict:
        return {"family": self.family, "params": self.hyper, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls.make(d["family"], d.get("seed", 0), **d["params"])


@dataclass(frozen=True)
class ClassWeights:
    human: float = 1.0
    bot: float = 1.0

    def per_row(self, y) -> np.ndarray:
        return np.where(np.asarray(y) == 1, self.bot, self.human).astype(np.float64)

    def to_dict(self) -> dict:
        return {"human": self.human, "bot": self.bot}


def class_weights(y) -> ClassWeights:
    """Inverse-frequency weights ``n / (2 * n_c)``."""
    y = np.asarray(y)
    n1 = int(np.sum(y == 1))
    n0 = len(y) - n1
    if n0 == 0 or n1 == 0:
        raise ClassAbsentError("class weights need both classes")
    return ClassWeights(len(y) / (2 * n0), len(y) / (2 * n1))


def sample_configs(family: str, C: int = 50, seed: int = 0, space: dict | None = None,
                   y=None) -> list[ModelConfig]:
    """``C`` distinct configurations of one family, each with its own model seed.

    For ``gbt``, ``scale_pos_weight`` is set to ``n_neg / n_pos`` of ``y`` when given.
    """
    space = SPACES[family] if space is None else space
    configs = []
    for i, params in enumerate(sample_params(space, C, seed)):
        if family == "gbt" and y is not None and "scale_pos_weight" in params:
            y = np.asarray(y)
            params["scale_pos_weight"] = float(np.sum(y == 0) / max(np.sum(y == 1), 1))
        configs.append(ModelConfig.make(family, seeding.sub_seed(seed, seeding.MODEL, i), **params))
    return configs


@dataclass
class TrainedClassifier:
    config: ModelConfig
    estimator: Any
    n_features: int
    weights: ClassWeights

    @property
    def family(self) -> str:
        return self.config.family

    @property
    def score_scale(self) -> str:
        return "margin" if self.family == "svm" else "probability"

    @property
    def default_threshold(self) -> float:
        return 0.0 if self.family == "svm" else 0.5

    def predict_scores(self, X) -> np.ndarray:
        return predict_scores(self, X)

    def to_dict(self) -> dict:
        return {"format": MODEL_FORMAT, "config": self.config.to_dict(), "n_features": self.n_features,
                "weights": self.weights.to_dict(), "estimator": self.estimator.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedClassifier":
        if d.get("format") != MODEL_FORMAT:
            raise SchemaMismatchError(f"unsupported model format {d.get('format')}")
        config = ModelConfig.from_dict(d["config"])
        est = _ESTIMATORS[config.family].from_dict(d["estimator"])
        return cls(config, est, d["n_features"], ClassWeights(**d["weights"]))


def train(config: ModelConfig, X, y, weights: ClassWeights | None = None) -> TrainedClassifier:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise TrainingError(f"X has shape {X.shape} but there are {len(y)} labels")
    if not np.all(np.isfinite(X)):
        raise TrainingError("non-finite values in training matrix")
    if len(np.unique(y)) < 2:
        raise ClassAbsentError("training data contains a single class")
    weights = weights or ClassWeights()
    sw = weights.per_row(y)
    h = config.hyper
    if config.family == "svm":
        if not h["C"] > 0:
            raise TrainingError(f"svm needs C > 0, got {h['C']}")
        est = LinearSVM.fit(X, y, sw, C=h["C"], epochs=h.get("epochs", 200))
    elif config.family == "random_forest":
        est = RandomForest.fit(X, y, sw, n_trees=h["n_trees"], max_depth=h.get("max_depth"),
                               max_features=h.get("max_features", "sqrt"),
                               min_samples_leaf=h.get("min_samples_leaf", 1),
                               bootstrap=h.get("bootstrap", True), seed=config.seed)
    else:
        est = BoostedTrees.fit(X, y, sw, seed=config.seed, **h)
    return TrainedClassifier(config, est, X.shape[1], weights)


def predict_scores(model: TrainedClassifier, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise SchemaMismatchError(f"model expects {model.n_features} features, got shape {X.shape}")
    return model.estimator.scores(X)


__all__ = ["FAMILIES", "ClassWeights", "ModelConfig", "TrainedClassifier", "class_weights",
           "predict_scores", "sample_configs", "train"]
