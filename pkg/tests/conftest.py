import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make `reference` importable

from hgp import Dataset, Executor, Hyperparameters, sample_function_exact


@pytest.fixture(scope="session")
def pool2():
    """A shared two-worker pool; creating pools per test is wasteful."""
    with Executor(workers=2) as ex:
        yield ex


def make_gp_data(n, dim, seed, sigma_f=1.0, lengthscale=0.4, sigma_eps=0.1):
    """A Dataset drawn from the model's own prior (exact draw)."""
    hp = Hyperparameters.isotropic(sigma_f, lengthscale, dim, sigma_eps)
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, 1.0, size=(n, dim))
    f = sample_function_exact(X, hp, rng)
    y = f + sigma_eps * rng.standard_normal(n)
    return Dataset(X, y), hp


@pytest.fixture
def small_gp_data():
    return make_gp_data(64, 2, seed=11)
