import numpy as np
import pytest

from bdnet import data as D


@pytest.fixture(scope="session")
def shape_corpus():
    """Small colored-shape dataset shared by slower integration tests."""
    return D.generate_synthetic(6, 120, 32, 3, rng_seed=11)


@pytest.fixture(scope="session")
def shape_splits(shape_corpus):
    return D.split(shape_corpus, D.SplitPlan(seed=11))


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
