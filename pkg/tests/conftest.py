import numpy as np
import pytest

from protectkit import tensor as T


@pytest.fixture
def f64():
    with T.precision("f64"):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
