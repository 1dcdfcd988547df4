import numpy as np
import pytest

from mustvqa.corpus import samples, synthesize_toy_dataset


@pytest.fixture(scope="session")
def toy():
    return synthesize_toy_dataset(7)


@pytest.fixture(scope="session")
def toy_xy(toy):
    return samples(toy)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
