"""The noisy quadratic benchmark ``f(x) = |x - 1|^2 + w``, ``w ~ N(0, sigma^2)``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import Objective, as_param_vector, seeded_normal


def noisy_quadratic_eval(point, sigma: float, seed: int) -> float:
    x = as_param_vector(point)
    w = sigma * seeded_normal([seed])[0] if sigma else 0.0
    return float(np.sum((x - 1.0) ** 2) + w)


@dataclass(frozen=True)
class NoisyQuadratic:
    """Sum of squared distances to the all-ones vector plus Gaussian noise.

    The minimiser is ``1`` with noiseless value 0.
    """

    dim: int = 5
    sigma: float = 3.0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")

    @property
    def target(self) -> np.ndarray:
        return np.ones(self.dim)

    def mean(self, x) -> float:
        """Noiseless objective value."""
        return float(np.sum((np.asarray(x, dtype=np.float64) - 1.0) ** 2))

    def batch(self, X, seeds) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        values = np.sum((X - 1.0) ** 2, axis=1)
        if self.sigma:
            values = values + self.sigma * seeded_normal(seeds)
        return values

    def objective(self) -> Objective:
        return Objective(
            lambda x, seed: noisy_quadratic_eval(x, self.sigma, seed),
            self.dim,
            batch_fn=self.batch,
            noise_sigma=self.sigma,
            name=f"noisy_quadratic(p={self.dim}, sigma={self.sigma:g})",
        )
