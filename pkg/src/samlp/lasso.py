"""Lasso feature selection.

The regression objective is ``(1/2n)||y - Xb - c||^2 + alpha ||b||_1`` with an
unpenalized intercept ``c``, solved by cyclic coordinate descent on the
covariance (Gram) form. Alpha is chosen by repeated balanced K-fold search with
a mode vote; when the vote lands on an edge of the grid the grid is shifted one
decade in that direction and the vote is repeated.
"""
from __future__ import annotations

import logging
import warnings
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import seeding
from .errors import SelectionError
from .metrics import mse
from .split import stratified_kfold, undersample_majority

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 10_000
MAX_EXPANSIONS = 5


def default_grid(lo: float = 1e-4, hi: float = 1e1, n: int = 50) -> np.ndarray:
    return np.logspace(np.log10(lo), np.log10(hi), n)


@dataclass(frozen=True)
class StandardizationStats:
    mean: np.ndarray
    std: np.ndarray

    @property
    def constant(self) -> np.ndarray:
        return self.std == 0

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        safe = np.where(self.constant, 1.0, self.std)
        Z = (X - self.mean) / safe
        Z[:, self.constant] = 0.0
        return Z

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "StandardizationStats":
        return cls(np.array(d["mean"], dtype=np.float64), np.array(d["std"], dtype=np.float64))


def standardize(X) -> tuple[np.ndarray, StandardizationStats]:
    """Z-score each column with the population std; constant columns become 0."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < 2:
        raise ValueError("standardization needs at least 2 rows")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    # treat numerically-constant columns as constant
    std = np.where(std <= 1e-12 * np.maximum(1.0, np.abs(mean)), 0.0, std)
    stats = StandardizationStats(mean, std)
    return stats.transform(X), stats


@dataclass(frozen=True)
class LassoFit:
    alpha: float
    coef: np.ndarray
    intercept: float
    n_iter: int
    converged: bool

    def predict(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.coef + self.intercept


@njit(cache=True)
def _soft(z, t):
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


@njit(cache=True)
def _cd_gram(G, c, alpha, beta, tol, max_iter):
    """Coordinate descent on 0.5 b'Gb - c'b + alpha|b|_1 (G = X'X/n, c = X'y/n, centered).

    Converged once a full sweep moves no coefficient by ``tol`` or more and
    every coordinate satisfies the subgradient condition within ``tol``.
    """
    p = G.shape[0]
    grad = c - G @ beta  # X'r/n for the current residual
    for it in range(1, max_iter + 1):
        max_delta = 0.0
        for j in range(p):
            gjj = G[j, j]
            if gjj <= 0.0:
                continue
            old = beta[j]
            new = _soft(grad[j] + gjj * old, alpha) / gjj
            d = new - old
            if d != 0.0:
                beta[j] = new
                for k in range(p):
                    grad[k] -= G[k, j] * d
                if abs(d) > max_delta:
                    max_delta = abs(d)
        if max_delta < tol:
            viol = 0.0
            for j in range(p):
                if G[j, j] <= 0.0:
                    continue
                if beta[j] > 0.0:
                    v = abs(grad[j] - alpha)
                elif beta[j] < 0.0:
                    v = abs(grad[j] + alpha)
                else:
                    v = max(abs(grad[j]) - alpha, 0.0)
                if v > viol:
                    viol = v
            if viol < tol:
                return beta, it, True
    return beta, max_iter, False


class _Problem:
    """Centered sufficient statistics of one (X, y) pair, reused across alphas."""

    def __init__(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        n = X.shape[0]
        self.x_mean = X.mean(axis=0)
        self.y_mean = float(y.mean())
        Xc = X - self.x_mean
        yc = y - self.y_mean
        self.G = np.ascontiguousarray(Xc.T @ Xc / n)
        self.c = Xc.T @ yc / n

    def alpha_max(self) -> float:
        return float(np.max(np.abs(self.c))) if self.c.size else 0.0

    def solve(self, alpha, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, warm=None) -> LassoFit:
        if not alpha > 0:
            raise ValueError("alpha must be positive")
        beta = np.zeros(len(self.c)) if warm is None else np.array(warm, dtype=np.float64)
        beta, n_iter, ok = _cd_gram(self.G, self.c, float(alpha), beta, float(tol), int(max_iter))
        return LassoFit(float(alpha), beta, self.y_mean - float(self.x_mean @ beta), int(n_iter), bool(ok))


def lasso_fit(X, y, alpha: float, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> LassoFit:
    """Fit the Lasso on (already standardized) ``X``."""
    return _Problem(X, y).solve(alpha, tol, max_iter)


def kkt_violation(X, y, fit: LassoFit) -> np.ndarray:
    """Per-coordinate distance from the subgradient optimality condition."""
    X = np.asarray(X, dtype=np.float64)
    r = np.asarray(y, dtype=np.float64) - fit.predict(X)
    g = X.T @ r / X.shape[0]
    active = fit.coef != 0
    out = np.maximum(np.abs(g) - fit.alpha, 0.0)
    out[active] = np.abs(g[active] - fit.alpha * np.sign(fit.coef[active]))
    const = np.all(X == X[0], axis=0)
    out[const] = 0.0
    return out


def cv_mse_curve(X, y, grid, k: int = 5, seed: int = 0, strata=None,
                 tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> np.ndarray:
    """Mean out-of-fold MSE for every alpha in ``grid``.

    Each fold is standardized with statistics of its own training rows. Alphas
    are solved from largest to smallest with warm starts.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    grid = np.asarray(grid, dtype=np.float64)
    strata = y if strata is None else np.asarray(strata)
    plan = stratified_kfold(np.arange(len(y)), strata, k, seed)
    errors = np.zeros((plan.k, len(grid)))
    for f, (tr, va) in enumerate(plan):
        Ztr, stats = standardize(X[tr])
        Zva = stats.transform(X[va])
        prob = _Problem(Ztr, y[tr])
        warm = None
        for a in np.argsort(-grid, kind="stable"):
            fit = prob.solve(grid[a], tol, max_iter, warm)
            warm = fit.coef
            errors[f, a] = mse(y[va], fit.predict(Zva))
    return errors.mean(axis=0)


def alpha_search(X, y, grid, k: int = 5, seed: int = 0, strata=None) -> float:
    """Alpha with the lowest mean out-of-fold MSE; ties go to the smaller alpha."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise ValueError("empty alpha grid")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("alpha grid must be strictly ascending")
    curve = cv_mse_curve(X, y, grid, k, seed, strata)
    return float(grid[int(np.argmin(curve))])  # argmin returns the first, i.e. smallest, alpha


def vote(alphas) -> float:
    """Most frequent alpha; ties go to the smallest."""
    counts = Counter(float(a) for a in alphas)
    best = max(counts.values())
    return min(a for a, n in counts.items() if n == best)


@dataclass
class SelectionResult:
    alpha_votes: list[float]
    final_alpha: float
    selected_features: list[str]
    selected_idx: list[int]
    coefficients: dict[str, float]
    search_grid_history: list[dict] = field(default_factory=list)
    fallback: bool = False
    final_fit: str = "full-train"

    def to_dict(self) -> dict:
        return {
            "alpha_votes": self.alpha_votes,
            "final_alpha": self.final_alpha,
            "selected_features": self.selected_features,
            "selected_idx": self.selected_idx,
            "coefficients": self.coefficients,
            "search_grid_history": self.search_grid_history,
            "fallback": self.fallback,
            "final_fit": self.final_fit,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SelectionResult":
        return cls(**d)


def select_features(X, y, feature_names, repetitions: int = 10, k: int = 5, seed: int = 0,
                    grid=None, max_expansions: int = MAX_EXPANSIONS, tracer=None, row_ids=None) -> SelectionResult:
    """Repeated balanced alpha search, mode vote, final fit on all given rows.

    ``tracer``/``row_ids`` optionally record which rows each step consumed.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    names = list(feature_names)
    grid = default_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    row_ids = np.arange(len(y)) if row_ids is None else np.asarray(row_ids)
    history = []
    direction = 0
    votes: list[float] = []
    for expansion in range(max_expansions + 1):
        votes = []
        for r in range(1, repetitions + 1):
            balanced = undersample_majority(np.arange(len(y)), y, seeding.sub_seed(seed, seeding.SELECTION, r))
            if tracer is not None:
                tracer.record("selection", row_ids[balanced])
            fold_seed = seeding.sub_seed(seed, seeding.SELECTION, r, 1000)
            votes.append(alpha_search(X[balanced], y[balanced], grid, k, fold_seed))
        winner = vote(votes)
        at_low, at_high = winner == grid[0], winner == grid[-1]
        history.append({"grid_min": float(grid[0]), "grid_max": float(grid[-1]), "n_points": int(len(grid)),
                        "votes": votes, "winner": winner, "at_edge": bool(at_low or at_high)})
        step = -1 if at_low else (1 if at_high else 0)
        if step == 0 or expansion == max_expansions or (direction and step != direction):
            break
        direction = step
        grid = grid * (10.0 ** step)
        log.info("alpha %.3g on grid edge, shifting grid one decade %s", winner, "down" if step < 0 else "up")
    final_alpha = vote(votes)

    Z, _ = standardize(X)
    if tracer is not None:
        tracer.record("selection", row_ids)
    fit = lasso_fit(Z, y.astype(np.float64), final_alpha)
    if not fit.converged:
        raise SelectionError(f"final Lasso fit at alpha={final_alpha:g} did not converge in {fit.n_iter} sweeps")
    idx = [int(i) for i in np.flatnonzero(fit.coef != 0)]
    fallback = False
    if not idx:
        warnings.warn(f"Lasso at alpha={final_alpha:g} zeroed every feature; keeping all {len(names)}",
                      stacklevel=2)
        idx = list(range(len(names)))
        fallback = True
    return SelectionResult(
        alpha_votes=votes,
        final_alpha=final_alpha,
        selected_features=[names[i] for i in idx],
        selected_idx=idx,
        coefficients={names[i]: float(fit.coef[i]) for i in idx},
        search_grid_history=history,
        fallback=fallback,
    )
