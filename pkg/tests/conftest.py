import math
from fractions import Fraction

import numpy as np
import pytest

from seedbank_ibd.core import ModelParams


def random_symmetric_params(rng, mu_range=(1e-3, 0.3), nu_range=(0.05, 0.95),
                            swap_range=(0.0, 0.4), n_range=(2, 50)):
    """A draw with M = N and epsilon = delta, rounded to a short decimal."""
    mu = 10 ** rng.uniform(math.log10(mu_range[0]), math.log10(mu_range[1]))
    nu = rng.uniform(*nu_range)
    e = Fraction(str(round(float(rng.uniform(*swap_range)), 3)))
    N = int(rng.integers(n_range[0], n_range[1] + 1))
    return ModelParams(N, N, e, e, mu, nu)


def random_asymmetric_params(rng):
    """A draw with M != N; delta is fixed by the coupling epsilon N = delta M."""
    while True:
        N = int(rng.integers(2, 51))
        M = int(rng.integers(2, 51))
        e = Fraction(str(round(float(rng.uniform(0, 0.4)), 3)))
        d = e * N / M
        if d < 1:
            mu = 10 ** rng.uniform(-3, math.log10(0.3))
            return ModelParams(N, M, e, d, mu, float(rng.uniform(0.05, 0.95)))


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)
