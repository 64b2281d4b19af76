"""Conjugate-gradient optimizer driven by PSP gradients and a reduced Hessian.

Each iteration sizes the number of parallel rounds from a tolerance that
tightens as ``eps0 / (k+1)**gamma_eps``, estimates the gradient, forms a
Polak-Ribiere direction (restarting to steepest descent every ``p`` steps or
when the direction stops being a descent direction), probes two more
gradients at ``theta +/- c_tilde * d/|d|`` to get the curvature along ``d``,
and takes the Newton step along ``d``.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import Executor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..core import EvaluationError, as_param_vector, derive_seed, derive_seeds, estimate_noise_variance, evaluate_values
from ..gradient import GradientEstimate, ToleranceSpec, psp_gradient, required_rounds
from ..hessian import ReducedHessian, reduced_hessian
from .trace import IterationRecord, OptimizerTrace, StopCriteria, StopReason

logger = logging.getLogger(__name__)

# seed-stream tags
_INIT, _NOISE, _GRAD, _PROBE, _PROBE_MINUS, _REPORT = range(1, 7)
_ZERO_DIRECTION = 1e-12


@dataclass(frozen=True)
class PspoConfig:
    """Settings for :func:`pspo_minimize`.

    ``M_min``/``M_max`` default to ``p`` and ``10 p``.  ``sigma2`` defaults
    to the objective's declared noise level, or else to a sample variance of
    ``noise_replicates`` evaluations at ``theta0``.  ``fixed_M`` bypasses the
    tolerance schedule.  With ``common_random_numbers`` the two curvature
    probes share perturbations and noise seeds.
    """

    c: float = 0.1
    c_tilde: float = 0.05
    epsilon0: float = 1.0
    gamma_eps: float = 0.5
    M_min: Optional[int] = None
    M_max: Optional[int] = None
    fixed_M: Optional[int] = None
    sigma2: Optional[float] = None
    noise_replicates: int = 10
    curvature_floor: float = 1e-6
    fallback_step: float = 0.1
    common_random_numbers: bool = True
    report_replicates: int = 3
    stop: StopCriteria = field(default_factory=StopCriteria)
    seed: int = 0

    def __post_init__(self):
        if not (self.c > 0 and self.c_tilde > 0 and self.epsilon0 > 0):
            raise ValueError("c, c_tilde and epsilon0 must be positive")
        if self.gamma_eps < 0:
            raise ValueError("gamma_eps must be >= 0")
        if not self.curvature_floor > 0:
            raise ValueError("curvature_floor must be positive")
        if self.fixed_M is not None and self.fixed_M < 1:
            raise ValueError("fixed_M must be >= 1")
        if self.M_min is not None and self.M_min < 1:
            raise ValueError("M_min must be >= 1")
        if self.M_min is not None and self.M_max is not None and self.M_max < self.M_min:
            raise ValueError("M_max must be >= M_min")
        if self.sigma2 is not None and self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")


def conjugate_beta(g_new, g_old) -> float:
    """Polak-Ribiere coefficient ``g_new.(g_new - g_old) / g_old.g_old``."""
    g_new = np.asarray(g_new, dtype=np.float64)
    g_old = np.asarray(g_old, dtype=np.float64)
    denom = g_old @ g_old
    if denom == 0:
        raise ZeroDivisionError("previous gradient is zero; restart the direction instead")
    return float(g_new @ (g_new - g_old) / denom)


def newton_step_size(g, d, h: ReducedHessian, floor: float) -> float:
    """``-g.d / max(d^T H d, floor*|d|^2)``."""
    g = np.asarray(g, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    dd = d @ d
    if not dd > 0:
        raise ValueError("direction must be nonzero")
    curv = max(h.quad(d), floor * dd)
    return float(-(g @ d) / curv)


def _as_estimate(est, M) -> GradientEstimate:
    if isinstance(est, GradientEstimate):
        return est
    return GradientEstimate(np.asarray(est, dtype=np.float64), M, math.nan, 0, 0)


def _report(objective, theta, n, seed, k, executor):
    if n <= 0:
        return math.nan
    seeds = derive_seeds(seed, n, _REPORT, k)
    values, _ = evaluate_values(objective, np.tile(theta, (n, 1)), seeds, executor)
    return float(np.mean(values))


def pspo_minimize(
    objective,
    theta0,
    config: Optional[PspoConfig] = None,
    *,
    gradient: Optional[Callable] = None,
    executor: Optional[Executor] = None,
    callback: Optional[Callable[[int, np.ndarray], bool]] = None,
):
    """Minimise ``objective`` starting at ``theta0``.

    Parameters
    ----------
    objective : Objective
    theta0 : array_like
    config : PspoConfig, optional
    gradient : callable, optional
        Replacement gradient estimator ``gradient(theta, M, seed)`` returning
        a :class:`GradientEstimate` or a plain array.  Defaults to
        :func:`psp_gradient` on ``objective``.
    executor : concurrent.futures.Executor, optional
        Runs the evaluations of each batch concurrently.
    callback : callable, optional
        ``callback(k, theta)`` after every iteration; returning True stops.

    Returns
    -------
    theta : ndarray
    trace : OptimizerTrace
    """
    cfg = config or PspoConfig()
    theta = as_param_vector(theta0, objective.dim)
    p = theta.size
    M_min = cfg.M_min or p
    M_max = cfg.M_max or max(M_min, 10 * p)
    trace = OptimizerTrace("pspo", theta.copy())

    def grad(x, M, seed):
        if gradient is None:
            return psp_gradient(objective, x, cfg.c, M, seed, executor)
        return _as_estimate(gradient(x, M, seed), M)

    evals = 0
    try:
        if cfg.sigma2 is not None:
            sigma2 = cfg.sigma2
        elif objective.noise_sigma is not None:
            sigma2 = objective.noise_sigma**2
        else:
            sigma2 = estimate_noise_variance(
                objective, theta, cfg.noise_replicates, derive_seed(cfg.seed, _NOISE), executor
            )
            evals += cfg.noise_replicates
        init = grad(theta, 1, derive_seed(cfg.seed, _INIT))
        evals += init.n_evals
    except (EvaluationError, np.linalg.LinAlgError) as exc:
        trace.setup_evals = evals
        trace.stop_reason, trace.error = StopReason.FAILURE, str(exc)
        return theta, trace
    trace.setup_evals = evals

    g_new = init.g_hat
    trace.initial_gradient = g_new.copy()
    d = -g_new
    inner = 0
    stop = cfg.stop
    for k in range(stop.max_iters):
        if cfg.fixed_M is not None:
            M, capped = cfg.fixed_M, False
        else:
            eps_k = cfg.epsilon0 / (k + 1) ** cfg.gamma_eps
            need = required_rounds(ToleranceSpec(eps_k, sigma2, cfg.c, M_max), p)
            M, capped = int(min(max(need, M_min), M_max)), need > M_max
        try:
            est = grad(theta, M, derive_seed(cfg.seed, _GRAD, k))
        except (EvaluationError, np.linalg.LinAlgError) as exc:
            trace.stop_reason, trace.error = StopReason.FAILURE, str(exc)
            return theta, trace
        evals += est.n_evals
        g = est.g_hat
        r = -g
        g_old, g_new = g_new, g
        gnorm = float(np.linalg.norm(g))

        if stop.grad_norm_tol is not None and gnorm < stop.grad_norm_tol:
            trace.iterations.append(
                IterationRecord(k, theta.copy(), _report(objective, theta, cfg.report_replicates, cfg.seed, k, executor),
                                gnorm, M, 0.0, math.nan, evals, capped=capped, gradient=g.copy(), direction=d.copy())
            )
            trace.converged, trace.stop_reason = True, StopReason.GRAD_NORM
            return theta, trace

        if g_old @ g_old == 0:
            beta, restart = 0.0, True
        else:
            beta, restart = conjugate_beta(g_new, g_old), False
        candidate = r + beta * d
        if restart or inner >= p or r @ candidate <= 0:
            d, inner, restart = r.copy(), 0, True
        else:
            d = candidate
        inner += 1

        dnorm = float(np.linalg.norm(d))
        if dnorm < _ZERO_DIRECTION:
            d_tilde = np.zeros(p)
            d_tilde[0] = cfg.c_tilde
        else:
            d_tilde = cfg.c_tilde * d / dnorm
        plus_seed = derive_seed(cfg.seed, _PROBE, k)
        minus_seed = plus_seed if cfg.common_random_numbers else derive_seed(cfg.seed, _PROBE_MINUS, k)
        try:
            g_plus = grad(theta + d_tilde, M, plus_seed)
            g_minus = grad(theta - d_tilde, M, minus_seed)
        except (EvaluationError, np.linalg.LinAlgError) as exc:
            trace.stop_reason, trace.error = StopReason.FAILURE, str(exc)
            return theta, trace
        evals += g_plus.n_evals + g_minus.n_evals

        fallback = False
        alpha, curvature = 0.0, math.nan
        if dnorm >= _ZERO_DIRECTION:
            try:
                with np.errstate(all="ignore"):
                    H = reduced_hessian(g_plus.g_hat, g_minus.g_hat, d_tilde)
                    curvature = H.quad(d) / dnorm**2
                    alpha = newton_step_size(g, d, H, cfg.curvature_floor)
            except ValueError:  # non-finite probe gradients or direction
                alpha = math.nan
        if not math.isfinite(alpha):
            logger.warning("non-finite step at iteration %d; falling back to steepest descent", k)
            d, inner, restart, fallback = r.copy(), 0, True, True
            alpha = cfg.fallback_step
        step = alpha * d
        step_norm = float(np.linalg.norm(step))
        theta = theta + step

        trace.iterations.append(
            IterationRecord(
                k, theta.copy(), _report(objective, theta, cfg.report_replicates, cfg.seed, k, executor),
                gnorm, M, alpha, beta, evals, restart=restart, capped=capped, fallback=fallback,
                step_norm=step_norm, curvature=curvature, gradient=g.copy(), direction=d.copy(),
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
