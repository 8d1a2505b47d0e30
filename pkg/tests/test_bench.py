import json

import numpy as np
import pytest

from samlp import FEATURE_NAMES
from samlp.bench import (BenchmarkReport, SyntheticSpec, combined_split, generate_synthetic, load_corpus,
                         random_scorer_f1, scenario_combined, scenario_per_dataset, synthetic_profiles,
                         write_corpus)
from samlp.errors import InputError
from samlp.features import build_matrix

PCNT = [j for j, n in enumerate(FEATURE_NAMES) if n.endswith("_pcnt")]
BINARY = [FEATURE_NAMES.index(n) for n in ("protected", "verified", "has_location", "has_profile_image",
                                            "has_profile_url")]


def separable_features(m):
    """Columns on which one threshold splits the two classes perfectly."""
    out = []
    for j in range(m.X.shape[1]):
        bot, hum = m.X[m.y == 1, j], m.X[m.y == 0, j]
        if bot.max() < hum.min() or hum.max() < bot.min():
            out.append(FEATURE_NAMES[j])
    return out


def test_generator_examples():
    (m,) = generate_synthetic(SyntheticSpec(n_datasets=1, n_rows=100, bot_ratio=0.5, seed=1))
    assert m.X.shape == (100, 49) and int(m.y.sum()) == 50
    again = generate_synthetic(SyntheticSpec(n_datasets=1, n_rows=100, bot_ratio=0.5, seed=1))[0]
    assert np.array_equal(m.X, again.X) and np.array_equal(m.y, again.y)
    assert "age" in separable_features(m)


@pytest.mark.parametrize("seed", range(5))
def test_generator_range_invariants(seed):
    for m in generate_synthetic(SyntheticSpec(n_datasets=2, n_rows=80, bot_ratio=0.3, seed=seed)):
        assert np.all(np.isfinite(m.X)) and np.all(m.X >= 0)
        assert np.all(m.X[:, PCNT] <= 100)
        assert set(np.unique(m.X[:, BINARY])) <= {0.0, 1.0}
        assert m.X[:, FEATURE_NAMES.index("age")].min() >= 1 / 86400
        assert int(m.y.sum()) == 24


def test_overlap_removes_separation():
    (m,) = generate_synthetic(SyntheticSpec(n_datasets=1, n_rows=400, overlap=1.0, seed=2))
    assert "age" not in separable_features(m)


def test_corpus_round_trip_both_api_versions(tmp_path):
    data = synthetic_profiles(SyntheticSpec(n_datasets=2, n_rows=30, seed=4))
    direct = [build_matrix(d) for d in data]
    for api in ("v1", "v2"):
        write_corpus(data, tmp_path / api, api)
        back = [build_matrix(d) for d in load_corpus(tmp_path / api)]
        for a, b in zip(direct, back):
            assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y) and a.dataset_name == b.dataset_name


def test_per_dataset_shape_and_average(small_corpus, fast_config):
    rep = scenario_per_dataset(small_corpus, fast_config)
    assert list(rep.per_dataset) == ["synth_01", "synth_02"]
    assert rep.average == pytest.approx(np.mean(list(rep.per_dataset.values())), abs=1e-9)
    assert rep.complete and rep.total is None
    one = scenario_per_dataset(small_corpus[:1], fast_config)
    assert one.average == one.per_dataset["synth_01"] == rep.per_dataset["synth_01"]
    assert scenario_per_dataset(small_corpus[::-1], fast_config).to_json() == rep.to_json()


def test_per_dataset_failure_flagged(small_corpus, fast_config):
    m = small_corpus[1]
    broken = m.subset(np.flatnonzero(m.y == 0))
    rep = scenario_per_dataset([small_corpus[0], broken], fast_config)
    assert not rep.complete and rep.per_dataset["synth_02"] is None
    assert rep.average == rep.per_dataset["synth_01"]
    assert "incomplete" in rep.table()


def test_combined_split_has_no_leakage(small_corpus, fast_config):
    matrix, split, seeds = combined_split(small_corpus, fast_config, 5)
    assert not set(split.train_idx.tolist()) & set(split.test_idx.tolist())
    assert len(split.train_idx) + len(split.test_idx) == len(matrix)
    assert len(set(seeds.values())) == 2
    origin = np.array(matrix.origin)
    for name in seeds:
        n_test = int(np.sum(origin[split.test_idx] == name))
        assert n_test == pytest.approx(0.3 * 120, abs=1)


def test_combined_report(small_corpus, fast_config, tmp_path):
    rep = scenario_combined(small_corpus, fast_config)
    assert rep.total is not None and rep.total >= 0.9
    txt = rep.table()
    assert "Total" in txt and "Average" in txt
    assert rep.average == pytest.approx(np.mean(list(rep.per_dataset.values())), abs=1e-9)
    assert scenario_combined(small_corpus[::-1], fast_config).to_json() == rep.to_json()
    paths = rep.save(tmp_path)
    assert json.loads(paths["json"].read_text())["total_f1"] == rep.total
    assert paths["csv"].read_text().splitlines()[-1].startswith("Total,")
    with pytest.raises(InputError):
        scenario_combined(small_corpus[:1], fast_config)


def test_identical_datasets_combined_close_to_per_dataset(small_corpus, fast_config):
    a = small_corpus[0]
    b = a.subset(np.arange(len(a)))
    b.dataset_name = "synth_01b"
    b.origin = ["synth_01b"] * len(b)
    per = scenario_per_dataset([a], fast_config)
    comb = scenario_combined([a, b], fast_config)
    assert abs(comb.per_dataset["synth_01"] - per.average) <= 0.05


def test_random_scorer_oracle_matches_base_rate():
    y = np.array([0] * 70 + [1] * 30)
    f = random_scorer_f1(y, y, seed=0, n_draws=400)
    # random scores give precision about the base rate; F1 sits between base-rate F1 and the all-bot F1
    assert 0.2 < f < 2 * 0.3 / 1.3 + 0.05
