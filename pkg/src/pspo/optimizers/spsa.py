"""Second-order SPSA baseline.

Two coupled recursions: a Newton-like parameter update using the running
average of per-iteration Hessian estimates, projected onto the positive
definite cone, and the averaging itself.  Gradients are one-sided
simultaneous-perturbation estimates (two evaluations each); the
per-iteration Hessian uses two more such gradients at ``theta +/- c~ D~``,
for six evaluations per iteration.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import Executor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..core import EvaluationError, as_param_vector, derive_seed, derive_seeds, evaluate_values
from ..perturbation import sample_delta0
from .pspo import _report
from .trace import IterationRecord, OptimizerTrace, StopCriteria, StopReason

logger = logging.getLogger(__name__)

_GRAD, _HESS, _HESS_MINUS = range(11, 14)


@dataclass(frozen=True)
class SpsaConfig:
    """Gains ``a_k = a/(A+k+1)**alpha_exp`` and ``c_k = c0/(k+1)**gamma_exp``.

    ``A`` defaults to 10% of ``stop.max_iters``; the Hessian probe size is
    ``c_tilde_factor * c_k``.
    """

    a: float = 1.0
    A: Optional[float] = None
    alpha_exp: float = 0.602
    c0: float = 1.0
    gamma_exp: float = 0.101
    c_tilde_factor: float = 0.5
    pd_floor: float = 1e-4
    common_random_numbers: bool = True
    report_replicates: int = 3
    stop: StopCriteria = field(default_factory=StopCriteria)
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.alpha_exp <= 1:
            raise ValueError("alpha_exp must be in (0, 1]")
        if not self.gamma_exp > 0:
            raise ValueError("gamma_exp must be positive")
        if not (self.a > 0 and self.c0 > 0 and self.c_tilde_factor > 0 and self.pd_floor > 0):
            raise ValueError("a, c0, c_tilde_factor and pd_floor must be positive")

    @property
    def offset(self) -> float:
        return 0.1 * self.stop.max_iters if self.A is None else self.A


def two_sided_gradient(objective, theta, c_k: float, delta_k, seeds, executor: Optional[Executor] = None) -> np.ndarray:
    """``(y(theta + c D) - y(theta - c D)) / (2c) * D^-1`` (elementwise inverse)."""
    x = as_param_vector(theta, objective.dim)
    D = np.asarray(delta_k, dtype=np.float64)
    if not c_k > 0:
        raise ValueError("c_k must be positive")
    if D.shape != x.shape or not np.all(np.abs(D) == 1):
        raise ValueError("delta_k must be a +/-1 vector of the parameter dimension")
    values, _ = evaluate_values(objective, np.vstack([x + c_k * D, x - c_k * D]), seeds, executor)
    if not np.all(np.isfinite(values)):
        raise EvaluationError("non-finite objective value in two-sided gradient")
    return (values[0] - values[1]) / (2 * c_k) / D


def one_sided_gradient(objective, theta, c_k: float, delta_k, seeds, executor: Optional[Executor] = None) -> np.ndarray:
    """``(y(theta + c D) - y(theta)) / c * D^-1``; ``seeds[0]`` is the base point."""
    x = as_param_vector(theta, objective.dim)
    D = np.asarray(delta_k, dtype=np.float64)
    values, _ = evaluate_values(objective, np.vstack([x, x + c_k * D]), seeds, executor)
    if not np.all(np.isfinite(values)):
        raise EvaluationError("non-finite objective value in one-sided gradient")
    return (values[1] - values[0]) / c_k / D


def project_pd(H, floor: float) -> np.ndarray:
    """Clamp the eigenvalues of symmetric ``H`` to at least ``floor``.

    Matrices already satisfying the floor are returned unchanged.  Inputs
    that are not symmetric to 1e-8 are symmetrised first, with a warning.
    """
    H = np.array(H, dtype=np.float64)
    if not floor > 0:
        raise ValueError("floor must be positive")
    scale = max(1.0, float(np.abs(H).max()))
    if np.abs(H - H.T).max() > 1e-8 * scale:
        logger.warning("project_pd: symmetrising a non-symmetric matrix")
    H = 0.5 * (H + H.T)
    w, Q = np.linalg.eigh(H)
    if w.min() >= floor:
        return H
    return (Q * np.maximum(w, floor)) @ Q.T


def hessian_estimate(grad_diff, c_tilde: float, delta_tilde) -> np.ndarray:
    """Per-iteration estimate ``(X + X^T)/2`` with ``X = dG/(2 c~) (D~^-1)^T``."""
    X = np.outer(np.asarray(grad_diff) / (2.0 * c_tilde), 1.0 / np.asarray(delta_tilde, dtype=np.float64))
    return 0.5 * (X + X.T)


def spsa2_minimize(
    objective,
    theta0,
    config: Optional[SpsaConfig] = None,
    *,
    executor: Optional[Executor] = None,
    callback: Optional[Callable[[int, np.ndarray], bool]] = None,
):
    """Run second-order SPSA; same return convention as :func:`pspo_minimize`."""
    cfg = config or SpsaConfig()
    theta = as_param_vector(theta0, objective.dim)
    p = theta.size
    trace = OptimizerTrace("spsa", theta.copy())
    H_bar = None
    evals = 0
    stop = cfg.stop
    for k in range(stop.max_iters):
        a_k = cfg.a / (cfg.offset + k + 1) ** cfg.alpha_exp
        c_k = cfg.c0 / (k + 1) ** cfg.gamma_exp
        ct_k = cfg.c_tilde_factor * c_k
        delta = sample_delta0(p, derive_seed(cfg.seed, _GRAD, k, 0))
        delta_t = sample_delta0(p, derive_seed(cfg.seed, _HESS, k, 0))
        # perturbation used by the two gradients inside the Hessian estimate
        delta_g = sample_delta0(p, derive_seed(cfg.seed, _HESS, k, 1))
        plus_seeds = derive_seeds(cfg.seed, 2, _HESS, k)
        minus_seeds = plus_seeds if cfg.common_random_numbers else derive_seeds(cfg.seed, 2, _HESS_MINUS, k)
        try:
            g = one_sided_gradient(objective, theta, c_k, delta, derive_seeds(cfg.seed, 2, _GRAD, k), executor)
            g_plus = one_sided_gradient(objective, theta + ct_k * delta_t, c_k, delta_g, plus_seeds, executor)
            g_minus = one_sided_gradient(objective, theta - ct_k * delta_t, c_k, delta_g, minus_seeds, executor)
        except EvaluationError as exc:
            trace.stop_reason, trace.error = StopReason.FAILURE, str(exc)
            return theta, trace
        evals += 6
        H_k = hessian_estimate(g_plus - g_minus, ct_k, delta_t)
        H_bar = H_k if H_bar is None else (k / (k + 1)) * H_bar + H_k / (k + 1)
        if not np.all(np.isfinite(H_bar)):
            trace.stop_reason, trace.error = StopReason.FAILURE, f"non-finite Hessian estimate at iteration {k}"
            return theta, trace
        step = -a_k * np.linalg.solve(project_pd(H_bar, cfg.pd_floor), g)
        if not np.all(np.isfinite(step)):
            trace.stop_reason, trace.error = StopReason.FAILURE, f"non-finite step at iteration {k}"
            return theta, trace
        gnorm = float(np.linalg.norm(g))
        if stop.grad_norm_tol is not None and gnorm < stop.grad_norm_tol:
            trace.iterations.append(
                IterationRecord(k, theta.copy(), _report(objective, theta, cfg.report_replicates, cfg.seed, k, executor),
                                gnorm, 1, 0.0, math.nan, evals, gradient=g.copy())
            )
            trace.converged, trace.stop_reason = True, StopReason.GRAD_NORM
            return theta, trace
        theta = theta + step
        step_norm = float(np.linalg.norm(step))
        trace.iterations.append(
            IterationRecord(
                k, theta.copy(), _report(objective, theta, cfg.report_replicates, cfg.seed, k, executor),
                gnorm, 1, a_k, math.nan, evals, step_norm=step_norm,
                curvature=float(np.trace(H_bar)) / p, gradient=g.copy(), direction=step / a_k,
            )
        )
        if callback is not None and callback(k, theta):
            trace.converged, trace.stop_reason = True, StopReason.CALLBACK
            return theta, trace
        if stop.step_tol is not None and step_norm <= stop.step_tol:
            trace.converged, trace.stop_reason = True, StopReason.STEP_SIZE
            return theta, trace
    trace.stop_reason = StopReason.MAX_ITERS
    return theta, trace
