"""Model selection by cross-validated F1, threshold tuning and the end-to-end pipeline.

Stages of :func:`run_pipeline`:

1. stratified holdout (70/30 by default) - the test rows are not touched again
   until the final evaluation,
2. Lasso feature selection on the training rows,
3. ``C`` sampled configurations per family, each scored by mean F1 over a
   fresh stratified K-fold plan,
4. the best configuration's pooled out-of-fold scores fix the decision
   threshold,
5. the winner is refit on the training rows and scored on the test rows at
   that threshold,
6. the winner is refit on every row and bundled into a :class:`ModelArtifact`.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from joblib import Parallel, delayed

from . import seeding
from .artifact import ModelArtifact, dumps
from .config import PipelineConfig
from .errors import ClassAbsentError, SamlpError, StageError, TuningError
from .features import ENTROPY_BASE, FEATURE_ORDER_VERSION, FeatureMatrix, concat_matrices
from .lasso import SelectionResult, default_grid, select_features
from .metrics import confusion, f1_at, pr_curve, precision_recall_f1
from .models import ClassWeights, ModelConfig, class_weights, predict_scores, sample_configs, train
from .split import FoldPlan, SplitIndices, stratified_holdout, stratified_kfold

log = logging.getLogger(__name__)


class IndexTracer:
    """Records which matrix rows each pipeline stage consumed."""

    def __init__(self):
        self.stages: dict[str, set[int]] = {}

    def record(self, stage: str, rows) -> None:
        self.stages.setdefault(stage, set()).update(int(r) for r in np.asarray(rows).ravel())

    def rows(self, stage: str) -> set[int]:
        return self.stages.get(stage, set())

    def overlap(self, stage: str, rows) -> set[int]:
        return self.rows(stage) & {int(r) for r in rows}


@dataclass
class ConfigEvaluation:
    config: ModelConfig
    fold_f1: list[float]
    mean_f1: float
    rank: int = 0
    failed: bool = False
    error: str = ""
    oof_scores: np.ndarray | None = field(default=None, repr=False)
    oof_rows: np.ndarray | None = field(default=None, repr=False)
    rows_used: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {"family": self.config.family, "params": self.config.hyper, "seed": self.config.seed,
                "key": self.config.key, "fold_f1": self.fold_f1, "mean_f1": self.mean_f1,
                "rank": self.rank, "failed": self.failed, "error": self.error}


def _weights_for(config: ModelConfig, y) -> ClassWeights:
    # boosted trees get their class balance from scale_pos_weight instead
    if config.family == "gbt":
        return ClassWeights()
    return class_weights(y)


def evaluate_config(config: ModelConfig, X, y, fold_plan: FoldPlan, weights: ClassWeights | None = None
                    ) -> ConfigEvaluation:
    """Mean validation F1 of the bot class over the folds of ``fold_plan``.

    Fold indices point into ``X``/``y``. Scores are cut at the family's
    natural threshold (0.5 for probabilities, 0 for margins). Class weights
    are computed on each fold's training rows unless ``weights`` is given.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    f1s = []
    oof_rows, oof_scores = [], []
    try:
        for tr, va in fold_plan:
            w = weights if weights is not None else _weights_for(config, y[tr])
            model = train(config, X[tr], y[tr], w)
            s = predict_scores(model, X[va])
            f1s.append(f1_at(s, y[va], model.default_threshold))
            oof_rows.append(va)
            oof_scores.append(s)
    except (SamlpError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        warnings.warn(f"configuration {config.family}/{config.key} failed: {exc}", stacklevel=2)
        return ConfigEvaluation(config, f1s, float("nan"), failed=True, error=f"{type(exc).__name__}: {exc}")
    rows = np.concatenate(oof_rows)
    order = np.argsort(rows)
    used = np.unique(np.concatenate([np.concatenate(fold_plan.folds)]))
    return ConfigEvaluation(config, f1s, float(np.mean(f1s)), oof_scores=np.concatenate(oof_scores)[order],
                            oof_rows=rows[order], rows_used=used)


def select_best(evaluations: list[ConfigEvaluation]) -> ModelConfig:
    """Highest mean F1 over all families; ties go to fewer estimators, shallower trees, then config key."""
    ok = [e for e in evaluations if not e.failed]
    if not ok:
        raise TuningError("every configuration failed")
    best = min(ok, key=lambda e: (-e.mean_f1, *e.config.complexity(), e.config.key))
    return best.config


def rank_evaluations(evaluations: list[ConfigEvaluation]) -> None:
    ok = sorted((e for e in evaluations if not e.failed),
                key=lambda e: (-e.mean_f1, *e.config.complexity(), e.config.key))
    for r, e in enumerate(ok, 1):
        e.rank = r


def optimize_threshold(scores, labels) -> float:
    """Score cut (``score >= t`` flags a bot) with the highest F1 on the PR curve.

    Every distinct score is a candidate; ties go to the higher threshold.
    Constant scores carry no ranking information and give 0.5 with a warning.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if np.all(scores == scores[0]):
        warnings.warn("scores are constant; falling back to threshold 0.5", stacklevel=2)
        return 0.5
    curve = pr_curve(scores, labels)
    # thresholds are in decreasing order, so the first maximum is the highest cut
    return float(curve.thresholds[int(np.argmax(curve.f1))])


def finalize_model(best_config: ModelConfig, X, y, selection: SelectionResult, threshold: float,
                   master_seed: int, metadata: dict | None = None, tracer: IndexTracer | None = None,
                   row_ids=None) -> ModelArtifact:
    """Refit the winner on every row (already feature-selected ``X``) and bundle it."""
    if tracer is not None:
        tracer.record("final", np.arange(len(y)) if row_ids is None else row_ids)
    model = train(best_config, X, y, _weights_for(best_config, y))
    meta = dict(metadata or {})
    meta["training_confusion"] = confusion(y, predict_scores(model, X) >= threshold).to_dict()
    return ModelArtifact(model, selection, float(threshold), master_seed, metadata=meta)


@dataclass
class EvaluationReport:
    pipeline_config: dict
    datasets: list[str]
    class_counts: dict
    split: dict
    selection: dict
    cv_table: list[dict]
    winner: dict
    threshold: float
    oof_f1_at_threshold: float
    test_confusion: dict
    test_precision: float
    test_recall: float
    test_f1: float
    n_failed_configs: int
    test_idx: np.ndarray = field(default=None, repr=False)
    test_scores: np.ndarray = field(default=None, repr=False)
    test_labels: np.ndarray = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "pipeline_config": self.pipeline_config,
            "datasets": self.datasets,
            "class_counts": self.class_counts,
            "split": self.split,
            "selection": self.selection,
            "cv_table": self.cv_table,
            "winner": self.winner,
            "threshold": self.threshold,
            "oof_f1_at_threshold": self.oof_f1_at_threshold,
            "test": {"confusion": self.test_confusion, "precision": self.test_precision,
                     "recall": self.test_recall, "f1": self.test_f1},
            "n_failed_configs": self.n_failed_configs,
        }

    def to_json(self) -> str:
        return dumps(self.to_dict())


class PipelineResult(NamedTuple):
    artifact: ModelArtifact
    report: EvaluationReport


def _stage(name):
    def wrap(fn):
        def inner(*a, **kw):
            try:
                return fn(*a, **kw)
            except StageError:
                raise
            except Exception as exc:
                raise StageError(name, exc) from exc
        return inner
    return wrap


def _evaluate_all(configs, X, y, plan, jobs):
    if jobs == 1:
        return [evaluate_config(c, X, y, plan) for c in configs]
    return Parallel(n_jobs=jobs)(delayed(evaluate_config)(c, X, y, plan) for c in configs)


def run_pipeline(data: FeatureMatrix | list[FeatureMatrix], config: PipelineConfig | None = None,
                 seed: int | None = None, split: SplitIndices | None = None,
                 tracer: IndexTracer | None = None, jobs: int | None = None) -> PipelineResult:
    """Holdout, selection, tuning, threshold, test evaluation, final refit.

    ``split`` overrides the stratified holdout (used by the combined-dataset
    benchmark, which splits each dataset separately).
    """
    config = config or PipelineConfig()
    seed = config.seed if seed is None else seed
    jobs = config.jobs if jobs is None else jobs
    matrix = concat_matrices(data) if isinstance(data, list) else data
    X, y = matrix.X, matrix.y
    if len(np.unique(y)) < 2:
        raise StageError("split", ClassAbsentError("the data holds a single class"))

    if split is None:
        split = _stage("split")(stratified_holdout)(y, config.holdout_ratio, seeding.sub_seed(seed, seeding.HOLDOUT))
    train_idx, test_idx = split.train_idx, split.test_idx
    if set(train_idx.tolist()) & set(test_idx.tolist()):
        raise StageError("split", TuningError("train and test rows overlap"))
    if tracer is not None:
        tracer.record("test", test_idx)
    Xtr, ytr = X[train_idx], y[train_idx]

    grid = default_grid(config.alpha_min, config.alpha_max, config.alpha_points)
    selection = _stage("selection")(select_features)(
        Xtr, ytr, matrix.schema, config.repetitions, config.k, seeding.sub_seed(seed, seeding.SELECTION),
        grid, config.max_expansions, tracer, train_idx)
    sel = np.array(selection.selected_idx, dtype=np.int64)
    Xtr_sel = Xtr[:, sel]

    configs = []
    for f, family in enumerate(config.families):
        configs += sample_configs(family, config.configs_per_family, seeding.sub_seed(seed, seeding.CONFIGS, f), y=ytr)
    plan = _stage("cv")(stratified_kfold)(np.arange(len(ytr)), ytr, config.k, seeding.sub_seed(seed, seeding.CV_FOLDS))
    log.info("evaluating %d configurations on %d training rows", len(configs), len(ytr))
    evaluations = _stage("cv")(_evaluate_all)(configs, Xtr_sel, ytr, plan, jobs)
    rank_evaluations(evaluations)
    if tracer is not None:
        for e in evaluations:
            if e.rows_used is not None:
                tracer.record("cv", train_idx[e.rows_used])

    best = _stage("select")(select_best)(evaluations)
    best_eval = next(e for e in evaluations if e.config == best)
    if tracer is not None:
        tracer.record("threshold", train_idx[best_eval.oof_rows])
    threshold = _stage("threshold")(optimize_threshold)(best_eval.oof_scores, ytr[best_eval.oof_rows])
    oof_f1 = f1_at(best_eval.oof_scores, ytr[best_eval.oof_rows], threshold)

    def _test():
        model = train(best, Xtr_sel, ytr, _weights_for(best, ytr))
        scores = predict_scores(model, X[test_idx][:, sel])
        return scores, confusion(y[test_idx], scores >= threshold)
    test_scores, test_conf = _stage("test")(_test)()
    p, r, f1 = precision_recall_f1(test_conf)

    metadata = {
        "datasets": sorted(set(matrix.origin)),
        "class_counts": {"all": _counts(y), "train": _counts(ytr), "test": _counts(y[test_idx])},
        "collection_date": matrix.collection_date,
        "entropy_base": ENTROPY_BASE,
        "feature_order_version": FEATURE_ORDER_VERSION,
        "score_scale": "margin" if best.family == "svm" else "probability",
        "cv_mean_f1": best_eval.mean_f1,
        "pipeline_config": config.to_dict(),
    }
    artifact = _stage("finalize")(finalize_model)(best, X[:, sel], y, selection, threshold, seed, metadata,
                                                   tracer, np.arange(len(y)))
    artifact.schema_hash = matrix.schema_hash
    artifact.feature_names = tuple(matrix.schema)

    report = EvaluationReport(
        pipeline_config={**config.to_dict(), "seed": seed, "jobs": None},
        datasets=sorted(set(matrix.origin)),
        class_counts=metadata["class_counts"],
        split={"seed": split.seed, "ratio": split.ratio, "n_train": int(len(train_idx)), "n_test": int(len(test_idx))},
        selection={k: v for k, v in selection.to_dict().items() if k != "coefficients"},
        cv_table=[e.to_dict() for e in sorted(evaluations, key=lambda e: (e.rank == 0, e.rank, e.config.key))],
        winner={**best.to_dict(), "key": best.key, "mean_f1": best_eval.mean_f1},
        threshold=threshold,
        oof_f1_at_threshold=oof_f1,
        test_confusion=test_conf.to_dict(),
        test_precision=p,
        test_recall=r,
        test_f1=f1,
        n_failed_configs=sum(e.failed for e in evaluations),
        test_idx=test_idx,
        test_scores=test_scores,
        test_labels=y[test_idx],
    )
    return PipelineResult(artifact, report)


def _counts(y) -> dict:
    y = np.asarray(y)
    return {"human": int(np.sum(y == 0)), "bot": int(np.sum(y == 1))}
