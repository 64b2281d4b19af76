"""Parallel simultaneous-perturbation (PSP) gradient estimation.

Given M one-sided differences ``df_i = f(theta + c*D_i) - f(theta)`` along
the columns of a sign-flip matrix ``D``, the gradient solves
``D.T @ g ~= df / c``: in the least-squares sense when M >= p and as the
minimum-norm interpolant when M < p.  The base value ``f(theta)`` is
evaluated once and shared by every column, for M + 1 evaluations in total.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import Executor
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .core import EvaluationError, as_param_vector, derive_seed, derive_seeds, evaluate_values
from .perturbation import PerturbationMatrix, as_delta_matrix, build_perturbations, matrix_rank

logger = logging.getLogger(__name__)


class RankDeficientError(np.linalg.LinAlgError):
    """The perturbation matrix does not have the rank the estimator needs."""


@dataclass(frozen=True)
class ToleranceSpec:
    """Inputs of the round-count bound ``M >= max(p, sigma2 * p / (c * eps)**2)``."""

    epsilon: float
    sigma2: float
    c: float
    M_max: int = 10**6

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.c > 0:
            raise ValueError("c must be positive")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")
        if self.M_max < 1:
            raise ValueError("M_max must be >= 1")


def required_rounds(spec: ToleranceSpec, p: int) -> int:
    """Smallest M meeting the bound, ignoring the cap."""
    if p < 1:
        raise ValueError("p must be >= 1")
    bound = spec.sigma2 * p / (spec.c**2 * spec.epsilon**2)
    # shave round-off so that e.g. 4500.000000001 does not become 4501
    return max(p, math.ceil(bound * (1 - 1e-12)))


def rounds_for_tolerance(spec: ToleranceSpec, p: int) -> int:
    """Number of parallel rounds for tolerance ``spec.epsilon``, capped at ``M_max``.

    Use :func:`required_rounds` to tell whether the cap was binding.
    """
    need = required_rounds(spec, p)
    if need > spec.M_max:
        logger.debug("round count %d capped at %d", need, spec.M_max)
    return max(1, min(spec.M_max, need))


@dataclass(frozen=True)
class GradientEstimate:
    g_hat: np.ndarray
    M: int
    c: float
    n_evals: int
    delta_seed: int


def function_differences(
    objective,
    theta,
    c: float,
    delta,
    seeds,
    executor: Optional[Executor] = None,
) -> np.ndarray:
    """One-sided differences ``f(theta + c*D_i, s_i) - f(theta, s_0)``.

    ``seeds[0]`` is used for the base point and ``seeds[1:]`` for the M
    forward points.  All M + 1 evaluations go out as a single batch.
    """
    D = as_delta_matrix(delta)
    x = as_param_vector(theta)
    if D.shape[0] != x.size:
        raise ValueError(f"perturbation dimension {D.shape[0]} != parameter dimension {x.size}")
    if not c > 0:
        raise ValueError("c must be positive")
    M = D.shape[1]
    seeds = np.asarray(seeds, dtype=np.uint64).ravel()
    if seeds.size != M + 1:
        raise ValueError(f"need {M + 1} seeds (base + {M} forward), got {seeds.size}")
    points = np.vstack([x[None, :], x[None, :] + c * D.T])
    values, _ = evaluate_values(objective, points, seeds, executor)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        i = int(bad[0])
        where = "base point" if i == 0 else f"perturbation column {i}"
        raise EvaluationError(f"non-finite objective value at {where}", index=i)
    return values[1:] - values[0]


def least_squares_gradient(delta, deltaf, c: float) -> np.ndarray:
    """``(1/c) (D D^T)^{-1} D df`` via a Cholesky solve; needs rank(D) = p."""
    D = as_delta_matrix(delta)
    df = np.asarray(deltaf, dtype=np.float64).ravel()
    p, M = D.shape
    if M < p or matrix_rank(D) < p:
        raise RankDeficientError(f"perturbations do not span R^{p} (M={M})")
    factor = scipy.linalg.cho_factor(D @ D.T)
    return scipy.linalg.cho_solve(factor, D @ df) / c


def min_norm_gradient(delta, deltaf, c: float) -> np.ndarray:
    """``(1/c) D (D^T D)^{-1} df``, the minimum-norm solution of ``D^T g = df/c``."""
    D = as_delta_matrix(delta)
    df = np.asarray(deltaf, dtype=np.float64).ravel()
    M = D.shape[1]
    if matrix_rank(D) < M:
        raise RankDeficientError(f"the {M} perturbation columns are linearly dependent")
    factor = scipy.linalg.cho_factor(D.T @ D)
    return D @ scipy.linalg.cho_solve(factor, df) / c


def psp_gradient(
    objective,
    theta,
    c: float,
    M: int,
    rng_seed: int,
    executor: Optional[Executor] = None,
) -> GradientEstimate:
    """Estimate the gradient of ``objective`` at ``theta`` from M+1 evaluations.

    The perturbation matrix is seeded by ``derive_seed(rng_seed, 0)`` and the
    evaluation seeds by ``derive_seed(rng_seed, 1, i)``, so two calls with
    the same ``rng_seed`` reuse the same perturbations and noise streams.
    """
    if not c > 0:
        raise ValueError("c must be positive")
    if M < 1:
        raise ValueError("M must be >= 1")
    x = as_param_vector(theta, objective.dim)
    p = x.size
    delta_seed = derive_seed(rng_seed, 0)
    delta: PerturbationMatrix = build_perturbations(p, M, delta_seed)
    seeds = derive_seeds(rng_seed, M + 1, 1)
    df = function_differences(objective, x, c, delta, seeds, executor)
    if M >= p:
        g = least_squares_gradient(delta, df, c)
    else:
        g = min_norm_gradient(delta, df, c)
    return GradientEstimate(g, M, float(c), M + 1, delta_seed)
