import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from samlp.errors import ClassAbsentError, SchemaError
from samlp.metrics import ConfusionCounts, confusion, f1_at, mse, pr_curve, precision_recall_f1


def test_perfect():
    assert precision_recall_f1(ConfusionCounts(tp=10, fp=0, tn=10, fn=0)) == (1, 1, 1)


def test_zero_conventions():
    assert precision_recall_f1(ConfusionCounts(tp=0, fp=0, tn=5, fn=5)) == (0, 0, 0)


def test_hand_arithmetic():
    p, r, f1 = precision_recall_f1(ConfusionCounts(tp=6, fp=2, tn=0, fn=4))
    assert p == 0.75 and r == 0.6
    assert f1 == pytest.approx(2 * 0.45 / 1.35, abs=1e-12)


def test_confusion_total():
    c = confusion([1, 0, 1, 1, 0], [1, 1, 0, 1, 0])
    assert (c.tp, c.fp, c.tn, c.fn) == (2, 1, 1, 1) and c.total == 5


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
def test_f1_bounds_and_swap(tp, fp, tn, fn):
    p, r, f1 = precision_recall_f1(ConfusionCounts(tp, fp, tn, fn))
    assert 0 <= f1 <= 1
    _, _, f1s = precision_recall_f1(ConfusionCounts(tp, fn, tn, fp))
    if p == r:
        assert f1s == pytest.approx(f1)


def _brute_curve(scores, y):
    out = []
    for t in sorted(set(scores.tolist()), reverse=True):
        c = confusion(y, scores >= t)
        out.append((t, *precision_recall_f1(c)))
    return out


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 8), st.booleans()), min_size=2, max_size=30))
def test_pr_curve_matches_brute_force(pairs):
    scores = np.array([p[0] / 8 for p in pairs])
    y = np.array([p[1] for p in pairs], dtype=int)
    if y.min() == y.max():
        with pytest.raises(ClassAbsentError):
            pr_curve(scores, y)
        return
    curve = pr_curve(scores, y)
    brute = _brute_curve(scores, y)
    assert len(curve) == len(brute)
    for i, (t, p, r, f1) in enumerate(brute):
        assert curve.thresholds[i] == t
        assert curve.precision[i] == pytest.approx(p, abs=1e-15)
        assert curve.recall[i] == pytest.approx(r, abs=1e-15)
        assert curve.f1[i] == pytest.approx(f1, abs=1e-15)
    assert np.all(np.diff(curve.thresholds) < 0)
    assert np.all(np.diff(curve.recall) >= 0)  # recall grows as the threshold falls
    assert curve.recall[-1] == 1.0


def test_pr_curve_separated_and_duplicates(tmp_path):
    curve = pr_curve([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])
    assert any(p == 1 and r == 1 for p, r in zip(curve.precision, curve.recall))
    assert len(pr_curve([0.5, 0.5, 0.5, 0.1], [1, 0, 1, 0])) == 2
    curve.to_csv(tmp_path / "pr.csv")
    assert (tmp_path / "pr.csv").read_text().startswith("threshold,precision,recall,f1")


def test_f1_at_uses_ge_rule():
    assert f1_at([0.5, 0.4], [1, 0], 0.5) == 1.0


def test_mse():
    assert mse([1, 2], [1, 2]) == 0
    assert mse([0, 1], [0.5, 0.5]) == 0.25
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=20), rng.normal(size=20)
    assert mse(a, b) == pytest.approx(sum((x - y) ** 2 for x, y in zip(a, b)) / 20, abs=1e-12)
    with pytest.raises(SchemaError):
        mse([1, 2], [1])
