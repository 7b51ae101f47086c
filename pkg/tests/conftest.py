import numpy as np
import pytest

from pacimdp.linsys import LinearSystem


@pytest.fixture
def double_integrator():
    return LinearSystem([[1.0, 1.0], [0.0, 1.0]], [[0.5], [1.0]], None, [-4.0], [4.0])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
