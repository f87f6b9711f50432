import numpy as np
import pytest

from aghq.models import conjugate_instance


@pytest.fixture
def conjugate100():
    """Conjugate Poisson data set with n = 100 drawn at lambda = 5."""
    rng = np.random.default_rng(2021)
    return conjugate_instance(rng.poisson(5.0, size=100))


def random_spd(rng, p):
    a = rng.normal(size=(p, p))
    return a @ a.T + p * np.eye(p) * 0.5
