"""Model-agnostic Shapley values with an interventional (background) value function.

``v(S)`` is the mean model score over background rows in which the features
of ``S`` are replaced by the instance's values. Exact mode enumerates every
coalition; sampled mode averages marginal contributions along seeded random
permutations. Both telescope, so ``base_value + sum(phi)`` reproduces the
instance score.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import seeding
from .artifact import ModelArtifact, dumps
from .errors import InputError, ModeError, SchemaMismatchError
from .models import TrainedClassifier

EXACT_MAX_FEATURES = 15
DEFAULT_SAMPLES = 2048
DEFAULT_BACKGROUND = 100
_ROW_BUDGET = 1 << 18  # hybrid rows scored per batch


@dataclass
class Explanation:
    base_value: float
    phi: np.ndarray
    features: tuple[str, ...]
    values: np.ndarray
    score: float
    mode: str
    instance_id: str = ""
    n_samples: int | None = None
    score_scale: str = "probability"

    @property
    def local_accuracy_gap(self) -> float:
        return abs(self.base_value + float(np.sum(self.phi)) - self.score)

    def to_dict(self) -> dict:
        return {"instance_id": self.instance_id, "base_value": self.base_value, "score": self.score,
                "mode": self.mode, "n_samples": self.n_samples, "score_scale": self.score_scale,
                "features": list(self.features), "values": self.values.tolist(), "phi": self.phi.tolist()}


def _scorer(model) -> tuple[Callable, tuple[str, ...] | None, str, list[int] | None]:
    """(score function over the model's own columns, names, score scale, column subset of full rows)."""
    if isinstance(model, ModelArtifact):
        clf = model.classifier
        return clf.predict_scores, tuple(model.selected_features), clf.score_scale, list(model.selected_idx)
    if isinstance(model, TrainedClassifier):
        return model.predict_scores, None, model.score_scale, None
    if callable(model):
        return model, None, "score", None
    raise InputError(f"cannot explain a {type(model).__name__}")


def _prepare(model, instances, background, feature_names=None):
    fn, names, scale, cols = _scorer(model)
    instances = np.atleast_2d(np.asarray(instances, dtype=np.float64))
    background = np.atleast_2d(np.asarray(background, dtype=np.float64))
    if background.shape[0] == 0:
        raise InputError("background sample is empty")
    if instances.shape[1] != background.shape[1]:
        raise SchemaMismatchError("instances and background have different column counts")
    if cols is not None:
        if instances.shape[1] == len(model.feature_names):
            instances, background = instances[:, cols], background[:, cols]
        elif instances.shape[1] != len(cols):
            raise SchemaMismatchError(f"expected {len(model.feature_names)} or {len(cols)} columns")
    m = instances.shape[1]
    if names is None:
        names = tuple(feature_names) if feature_names is not None else tuple(f"x{j}" for j in range(m))
    if len(names) != m:
        raise SchemaMismatchError(f"{len(names)} feature names for {m} columns")
    return fn, names, scale, instances, background


def _coalition_values(fn, x, background, masks: np.ndarray) -> np.ndarray:
    """v(S) for each boolean row of ``masks`` (shape (n_masks, m))."""
    nb = background.shape[0]
    out = np.empty(len(masks))
    step = max(1, _ROW_BUDGET // nb)
    for lo in range(0, len(masks), step):
        chunk = masks[lo:lo + step]
        hybrid = np.where(chunk[:, None, :], x[None, None, :], background[None, :, :])
        scores = np.asarray(fn(hybrid.reshape(-1, x.shape[0])), dtype=np.float64)
        out[lo:lo + len(chunk)] = scores.reshape(len(chunk), nb).mean(axis=1)
    return out


def _exact(fn, x, background) -> tuple[float, np.ndarray]:
    m = x.shape[0]
    codes = np.arange(1 << m, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(m)) & 1
    v = _coalition_values(fn, x, background, bits.astype(bool))
    size = bits.sum(axis=1)
    # Shapley kernel |S|! (m-|S|-1)! / m! for coalitions that exclude the feature
    w = np.array([math.factorial(s) * math.factorial(m - s - 1) / math.factorial(m) if s < m else 0.0
                  for s in range(m + 1)])
    phi = np.empty(m)
    for i in range(m):
        without = codes[bits[:, i] == 0]
        phi[i] = float(np.sum(w[size[without]] * (v[without | (1 << i)] - v[without])))
    return float(v[0]), phi


def _sampled(fn, x, background, n_samples: int, seed: int) -> tuple[float, np.ndarray]:
    m = x.shape[0]
    rng = np.random.default_rng(seed)
    perms = np.array([rng.permutation(m) for _ in range(n_samples)], dtype=np.int64)
    # prefix masks along every permutation: (n_samples, m + 1, m)
    pos = np.empty_like(perms)
    pos[np.arange(n_samples)[:, None], perms] = np.arange(m)
    prefix = pos[:, None, :] < np.arange(m + 1)[None, :, None]
    flat = prefix.reshape(-1, m)
    uniq, inverse = np.unique(flat, axis=0, return_inverse=True)
    v = _coalition_values(fn, x, background, uniq)[np.asarray(inverse).ravel()].reshape(n_samples, m + 1)
    gains = np.diff(v, axis=1)  # gains[p, t] is the contribution of perms[p, t]
    phi = np.zeros(m)
    np.add.at(phi, perms.ravel(), gains.ravel())
    return float(v[0, 0]), phi / n_samples


def resolve_mode(mode: str, m: int) -> str:
    if mode == "auto":
        return "exact" if m <= EXACT_MAX_FEATURES else "sampled"
    if mode == "exact" and m > EXACT_MAX_FEATURES:
        raise ModeError(f"exact mode enumerates 2^{m} coalitions; use sampled mode above "
                        f"{EXACT_MAX_FEATURES} features")
    if mode not in ("exact", "sampled"):
        raise ModeError(f"unknown mode {mode!r}")
    return mode


def shapley_values(model, instance, background, mode: str = "auto", seed: int = 0,
                   n_samples: int = DEFAULT_SAMPLES, feature_names=None, instance_id: str = "") -> Explanation:
    """Shapley attribution of one instance's score.

    ``model`` is a :class:`ModelArtifact`, a :class:`TrainedClassifier` or any
    callable mapping a 2-D array to scores. Artifacts accept full-schema rows.
    """
    fn, names, scale, inst, bg = _prepare(model, instance, background, feature_names)
    x = inst[0]
    mode = resolve_mode(mode, len(x))
    if mode == "exact":
        base, phi = _exact(fn, x, bg)
    else:
        base, phi = _sampled(fn, x, bg, int(n_samples), seed)
    score = float(np.asarray(fn(x[None, :]), dtype=np.float64)[0])
    return Explanation(base, phi, names, x.copy(), score, mode, instance_id,
                       int(n_samples) if mode == "sampled" else None, scale)


def explain_batch(model, instances, background, mode: str = "auto", seed: int = 0,
                  n_samples: int = DEFAULT_SAMPLES, feature_names=None, instance_ids=None) -> list[Explanation]:
    """Per-row :func:`shapley_values`; row ``i`` uses its own sub-seed of ``seed``."""
    instances = np.atleast_2d(np.asarray(instances, dtype=np.float64))
    ids = [str(i) for i in range(len(instances))] if instance_ids is None else [str(i) for i in instance_ids]
    return [shapley_values(model, row, background, mode, seeding.sub_seed(seed, seeding.EXPLAIN, i), n_samples,
                           feature_names, ids[i]) for i, row in enumerate(instances)]


def background_sample(X, n: int = DEFAULT_BACKGROUND, seed: int = 0) -> np.ndarray:
    """Up to ``n`` distinct rows drawn without replacement, kept in their original order."""
    X = np.asarray(X, dtype=np.float64)
    if len(X) <= n:
        return X.copy()
    rng = np.random.default_rng(seeding.sub_seed(seed, seeding.EXPLAIN, 0xB6))
    return X[np.sort(rng.choice(len(X), n, replace=False))]


@dataclass
class GlobalSummary:
    ranking: list[tuple[str, float]]
    pairs: dict[str, list[tuple[float, float]]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"ranking": [{"feature": f, "mean_abs_phi": v} for f, v in self.ranking],
                "pairs": {f: [[a, b] for a, b in p] for f, p in self.pairs.items()}}


def summarize(explanations: list[Explanation], k: int = 20) -> GlobalSummary:
    """Mean |phi| per feature, descending (ties by name), truncated to ``k``."""
    if not explanations:
        raise InputError("nothing to summarize")
    names = explanations[0].features
    if any(e.features != names for e in explanations):
        raise SchemaMismatchError("explanations cover different feature sets")
    # order-independent aggregation: sort by instance before summing
    expl = sorted(explanations, key=lambda e: (e.instance_id, e.values.tobytes(), e.phi.tobytes()))
    phi = np.array([e.phi for e in expl])
    vals = np.array([e.values for e in expl])
    mean_abs = np.abs(phi).mean(axis=0)
    order = sorted(range(len(names)), key=lambda j: (-mean_abs[j], names[j]))[:k]
    ranking = [(names[j], float(mean_abs[j])) for j in order]
    pairs = {names[j]: [(float(a), float(b)) for a, b in zip(vals[:, j], phi[:, j])] for j in order}
    return GlobalSummary(ranking, pairs)


def write_explanations_json(explanations: list[Explanation], path: str | Path) -> None:
    Path(path).write_text(dumps([e.to_dict() for e in explanations]) + "\n", encoding="utf-8")


def write_explanations_csv(explanations: list[Explanation], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["instance_id", "feature", "value", "phi"])
        for e in explanations:
            for name, v, p in zip(e.features, e.values, e.phi):
                w.writerow([e.instance_id, name, repr(float(v)), repr(float(p))])


def write_summary_json(summary: GlobalSummary, path: str | Path) -> None:
    Path(path).write_text(dumps(summary.to_dict()) + "\n", encoding="utf-8")


def plot_summary(summary: GlobalSummary, path: str | Path, title: str = "Feature impact") -> Path:
    """Beeswarm-style SVG: one row per ranked feature, points colored by feature value."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(path)
    names = [f for f, _ in summary.ranking]
    rng = np.random.default_rng(0)
    with matplotlib.rc_context({"svg.hashsalt": "samlp", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(7, 0.35 * len(names) + 1.5))
        for row, name in enumerate(names):
            pts = np.array(summary.pairs.get(name, []), dtype=np.float64).reshape(-1, 2)
            if not len(pts):
                continue
            v = pts[:, 0]
            span = v.max() - v.min()
            color = (v - v.min()) / span if span > 0 else np.full(len(v), 0.5)
            y = len(names) - 1 - row + rng.uniform(-0.25, 0.25, len(v))
            sc = ax.scatter(pts[:, 1], y, c=color, cmap="coolwarm", vmin=0, vmax=1, s=8)
        ax.set_yticks(range(len(names)))
        ax.set_yticklabels(names[::-1])
        ax.axvline(0.0, color="grey", lw=0.8)
        ax.set_xlabel("Shapley value (impact on score)")
        ax.set_title(title)
        if names:
            fig.colorbar(sc, ax=ax, label="feature value (low to high)")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path


def load_explanations(path: str | Path) -> list[Explanation]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return [Explanation(d["base_value"], np.array(d["phi"]), tuple(d["features"]), np.array(d["values"]),
                        d["score"], d["mode"], d["instance_id"], d["n_samples"], d["score_scale"]) for d in data]
