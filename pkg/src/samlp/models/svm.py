"""Linear SVM trained by full-batch Pegasos-style subgradient descent.

Objective on standardized inputs ``z`` (with a constant column for the bias)::

    lambda/2 ||w||^2 + sum_i s_i max(0, 1 - t_i w.z_i),   sum_i s_i = 1,  lambda = 1/C

Step size is ``1/(lambda t)``; iterates are projected onto the ball of radius
``1/sqrt(lambda)`` and the returned weights average the second half of the run.
Normalized sample weights make the solution invariant to duplicating rows.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..lasso import StandardizationStats, standardize


def hinge_loss(margins, t, s) -> float:
    return float(np.sum(s * np.maximum(0.0, 1.0 - t * margins)))


@dataclass
class LinearSVM:
    coef: np.ndarray
    intercept: float
    stats: StandardizationStats

    @classmethod
    def fit(cls, X, y, sample_weight, *, C=1.0, epochs=200) -> "LinearSVM":
        Z, stats = standardize(X)
        n = Z.shape[0]
        Za = np.hstack([Z, np.ones((n, 1))])
        t = np.where(np.asarray(y) == 1, 1.0, -1.0)
        s = np.asarray(sample_weight, dtype=np.float64)
        s = s / s.sum()
        lam = 1.0 / float(C)
        radius = 1.0 / np.sqrt(lam)
        w = np.zeros(Za.shape[1])
        avg = np.zeros_like(w)
        n_avg = 0
        epochs = int(epochs)
        for step in range(1, epochs + 1):
            active = t * (Za @ w) < 1.0
            grad = lam * w - (s[active] * t[active]) @ Za[active]
            w = w - grad / (lam * step)
            norm = np.linalg.norm(w)
            if norm > radius:
                w *= radius / norm
            if step > epochs // 2:
                avg += w
                n_avg += 1
        w = avg / n_avg
        return cls(w[:-1].copy(), float(w[-1]), stats)

    def scores(self, X) -> np.ndarray:
        return self.stats.transform(X) @ self.coef + self.intercept

    def to_dict(self) -> dict:
        return {"coef": self.coef.tolist(), "intercept": self.intercept, "stats": self.stats.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "LinearSVM":
        return cls(np.array(d["coef"], dtype=np.float64), d["intercept"], StandardizationStats.from_dict(d["stats"]))
