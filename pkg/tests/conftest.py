import json
import warnings
from pathlib import Path

import numpy as np
import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def golden_v1():
    return (FIXTURES / "golden_user_v1.json").read_text()


@pytest.fixture
def golden_v2():
    return (FIXTURES / "golden_user_v2.json").read_text()


@pytest.fixture
def golden_sheet():
    return json.loads((FIXTURES / "golden_features.json").read_text())


@pytest.fixture(scope="session")
def small_corpus():
    """Two small separable synthetic datasets as feature matrices."""
    from samlp.bench import SyntheticSpec, generate_synthetic
    return generate_synthetic(SyntheticSpec(n_datasets=2, n_rows=120, seed=3))


@pytest.fixture(scope="session")
def fast_config():
    from samlp.config import PipelineConfig
    return PipelineConfig(configs_per_family=2, repetitions=2, k=3, alpha_points=12)


@pytest.fixture(autouse=True)
def _quiet_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("default")
        yield


def linear_data(n=200, m=5, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, m))
    y = (X[:, 0] + 0.5 * X[:, 1] + 0.3 * rng.normal(size=n) > 0).astype(np.int64)
    return X, y
