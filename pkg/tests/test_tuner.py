import json
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from samlp.artifact import ModelArtifact
from samlp.errors import StageError, TuningError
from samlp.metrics import f1_at
from samlp.models import ModelConfig
from samlp.split import FoldPlan, stratified_kfold
from samlp.tuner import (ConfigEvaluation, IndexTracer, evaluate_config, finalize_model, optimize_threshold,
                         run_pipeline, select_best)

from conftest import linear_data


def _eval(family, f1, **hyper):
    return ConfigEvaluation(ModelConfig.make(family, **hyper), [f1], f1)


def _brute_f1(scores, labels):
    # every cut between sorted distinct scores, plus "flag nothing"
    best = 0.0
    for t in np.unique(scores):
        pred = scores >= t
        tp = np.sum(pred & (labels == 1))
        fp = np.sum(pred & (labels == 0))
        fn = np.sum(~pred & (labels == 1))
        f1 = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
        best = max(best, f1)
    return best


def test_threshold_separable_picks_highest_tie():
    t = optimize_threshold([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0])
    assert t == 0.8


def test_threshold_constant_scores_fallback():
    with pytest.warns(UserWarning):
        assert optimize_threshold([0.3] * 4, [1, 0, 1, 0]) == 0.5


def test_threshold_exhaustive_oracle_100_fixtures():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        n = int(rng.integers(5, 60))
        labels = rng.integers(0, 2, n)
        labels[:2] = [0, 1]
        scores = np.round(rng.random(n), int(rng.integers(1, 4)))
        if np.all(scores == scores[0]):
            continue
        t = optimize_threshold(scores, labels)
        assert f1_at(scores, labels, t) == _brute_f1(scores, labels)


def test_select_best_argmax_across_families():
    evals = [_eval("svm", 0.80, C=1.0), _eval("random_forest", 0.85, n_trees=10, max_depth=3),
             _eval("gbt", 0.91, n_estimators=10, max_depth=3)]
    assert select_best(evals).family == "gbt"
    assert select_best(evals[:1]) == evals[0].config


def test_select_best_tie_prefers_simpler():
    a = _eval("gbt", 0.9, n_estimators=100, max_depth=3)
    b = _eval("gbt", 0.9, n_estimators=50, max_depth=6)
    c = _eval("random_forest", 0.9, n_trees=50, max_depth=4)
    assert select_best([a, b, c]) == c.config
    assert select_best([a, b]) == b.config


def test_select_best_all_failed():
    e = _eval("svm", 0.5, C=1.0)
    e.failed = True
    with pytest.raises(TuningError):
        select_best([e])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.sampled_from([0.5, 0.7, 0.9]), min_size=1, max_size=8), st.randoms())
def test_select_best_order_invariant(f1s, rnd):
    evals = [_eval("random_forest", f, n_trees=10 + i % 3, max_depth=3) for i, f in enumerate(f1s)]
    shuffled = evals[:]
    rnd.shuffle(shuffled)
    assert select_best(evals) == select_best(shuffled)


def test_evaluate_config_examples():
    X, y = linear_data(120, 3, seed=1)
    X[:, 0] = np.where(y == 1, 5.0, -5.0)
    plan = stratified_kfold(np.arange(120), y, 4, seed=0)
    ev = evaluate_config(ModelConfig.make("random_forest", n_trees=5, max_depth=2, max_features="all"), X, y, plan)
    assert ev.mean_f1 == 1.0 and not ev.failed
    assert ev.mean_f1 == pytest.approx(np.mean(ev.fold_f1))
    # a config that always fails is flagged, not raised
    with pytest.warns(UserWarning):
        bad = evaluate_config(ModelConfig.make("svm", C=-1.0), X, y, plan)
    assert bad.failed


def test_evaluate_all_human_gives_zero():
    X = np.zeros((20, 2))
    y = np.array([0] * 10 + [1] * 10)
    plan = FoldPlan((np.arange(0, 20, 2), np.arange(1, 20, 2)), 0)
    ev = evaluate_config(ModelConfig.make("gbt", n_estimators=0, scale_pos_weight=0.5), X, y, plan)
    assert ev.fold_f1 == [0.0, 0.0]


def test_finalize_training_f1_not_below_cv(small_corpus, fast_config):
    res = run_pipeline(small_corpus[0], fast_config)
    m = small_corpus[0]
    train_f1 = f1_at(res.artifact.scores(m.X), m.y, res.artifact.threshold)
    assert train_f1 >= res.report.winner["mean_f1"]
    assert res.artifact.schema_hash == m.schema_hash
    back = ModelArtifact.from_dict(json.loads(res.artifact.dumps()))
    assert np.array_equal(back.scores(m.X), res.artifact.scores(m.X))


def test_pipeline_separable_and_threshold_used(small_corpus, fast_config):
    res = run_pipeline(small_corpus, fast_config)
    r = res.report
    assert r.test_f1 >= 0.95
    assert r.test_f1 == pytest.approx(f1_at(r.test_scores, r.test_labels, r.threshold))
    assert r.oof_f1_at_threshold >= r.winner["mean_f1"] - 1e-12 or res.artifact.classifier.config.family == "svm"


def test_pipeline_deterministic_any_jobs(small_corpus, fast_config):
    a = run_pipeline(small_corpus[1], fast_config, jobs=1)
    b = run_pipeline(small_corpus[1], fast_config, jobs=2)
    assert a.artifact.dumps() == b.artifact.dumps()
    assert a.report.to_json() == b.report.to_json()


@pytest.mark.parametrize("seed", [0, 7, 19])
def test_leakage_tracer(small_corpus, fast_config, seed):
    tracer = IndexTracer()
    res = run_pipeline(small_corpus[0], fast_config, seed=seed, tracer=tracer)
    test = set(res.report.test_idx.tolist())
    for stage in ("selection", "cv", "threshold"):
        assert tracer.rows(stage) and not tracer.overlap(stage, test)
    assert tracer.rows("test") == test
    assert test <= tracer.rows("final")


def test_stage_error_tags_stage(small_corpus, fast_config):
    m = small_corpus[0]
    bad = m.subset(np.flatnonzero(m.y == 1))
    with pytest.raises(StageError) as info:
        run_pipeline(bad, fast_config)
    assert info.value.stage == "split"
    assert "single class" in str(info.value)
