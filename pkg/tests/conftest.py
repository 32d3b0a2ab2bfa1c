import matplotlib

matplotlib.use("Agg")

import numpy as np
import pytest

from mfturb.ensemble import IncrementEnsemble


def random_atomic_ensemble(rng, ell=0.1, allow_zero=True, max_atoms=12):
    """Small weighted-atom ensemble for property sweeps."""
    n = int(rng.integers(2, max_atoms + 1))
    values = np.exp(rng.normal(0.0, 1.5, size=n))
    if allow_zero and rng.random() < 0.3:
        values[0] = 0.0
    weights = rng.dirichlet(np.ones(n))
    return IncrementEnsemble(ell, values, weights)


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)
