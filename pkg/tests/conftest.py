import numpy as np
import pytest

from clustertag.config import RunConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def config():
    return RunConfig(seed=11)
