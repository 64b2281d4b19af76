import numpy as np
import pytest

from pspo.core import Objective, seeded_normal


def linear_objective(a, sigma=0.0):
    """``a.x`` plus optional N(0, sigma^2) noise drawn from the seed."""
    a = np.asarray(a, dtype=np.float64)

    def batch(X, seeds):
        v = X @ a
        return v + sigma * seeded_normal(seeds) if sigma else v

    return Objective(lambda x, s: float(batch(x[None, :], [s])[0]), a.size, batch_fn=batch, noise_sigma=sigma)


def quadratic_objective(A, sigma=0.0):
    """``x^T A x`` plus optional noise; exact gradient is ``2 A x``."""
    A = np.asarray(A, dtype=np.float64)

    def batch(X, seeds):
        v = np.einsum("ij,jk,ik->i", X, A, X)
        return v + sigma * seeded_normal(seeds) if sigma else v

    return Objective(lambda x, s: float(batch(x[None, :], [s])[0]), A.shape[0], batch_fn=batch, noise_sigma=sigma)


def random_spd(rng, p, shift=0.1):
    B = rng.standard_normal((p, p))
    return B @ B.T + shift * np.eye(p)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
