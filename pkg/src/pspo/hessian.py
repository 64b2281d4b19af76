"""Curvature estimates from gradient differences.

The reduced Hessian along a direction ``d`` is the symmetric rank-2 matrix
built from a gradient difference along ``d``; it reproduces the true
quadratic form ``d^T H d`` but says nothing about other directions.  The
optimizer only ever needs that single number, so the matrix is kept in
factored form and materialised on request.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import as_param_vector


@dataclass(frozen=True)
class ReducedHessian:
    """``H_d = (dG d^T + d dG^T) / (4 |d|^2)`` for a two-sided difference ``dG``.

    ``grad_diff`` is ``g(x + d) - g(x - d)``, a difference over a step of
    ``2 d``; half of it plays the role of the one-sided difference over ``d``.
    """

    grad_diff: np.ndarray
    direction: np.ndarray

    @property
    def step(self) -> float:
        return float(np.linalg.norm(self.direction))

    @property
    def matrix(self) -> np.ndarray:
        dG, d = self.grad_diff, self.direction
        outer = np.outer(dG, d)
        return (outer + outer.T) / (4.0 * (d @ d))

    def quad(self, v) -> float:
        """``v^T H_d v`` without forming the matrix."""
        v = np.asarray(v, dtype=np.float64)
        d = self.direction
        return float((self.grad_diff @ v) * (d @ v) / (2.0 * (d @ d)))


def reduced_hessian(g_plus, g_minus, d_tilde) -> ReducedHessian:
    """Reduced Hessian along ``d_tilde`` from gradients at ``x +/- d_tilde``."""
    d = as_param_vector(d_tilde)
    gp = as_param_vector(g_plus, d.size)
    gm = as_param_vector(g_minus, d.size)
    if not np.linalg.norm(d) > 0:
        raise ValueError("direction must be nonzero")
    return ReducedHessian(gp - gm, d)


def curvature_along(h: ReducedHessian, v) -> float:
    """Return ``v^T H_d v``."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != h.direction.shape:
        raise ValueError(f"vector shape {v.shape} does not match {h.direction.shape}")
    return h.quad(v)


def full_hessian_estimate(
    gradient_fn: Callable[[np.ndarray], np.ndarray],
    x,
    dirs: Sequence,
    orth_tol: float = 1e-8,
) -> np.ndarray:
    """Estimate the Hessian from gradient differences along an orthogonal basis.

    Returns ``sum_i (g(x + d_i) - g(x)) d_i^T / |d_i|^2``.  This is exact
    for quadratics and is meant as a reference, not for the optimizer loop.
    """
    x = as_param_vector(x)
    D = np.array([as_param_vector(d, x.size) for d in dirs])
    if D.shape[0] != x.size:
        raise ValueError(f"need {x.size} directions, got {D.shape[0]}")
    norms = np.linalg.norm(D, axis=1)
    if np.any(norms == 0):
        raise ValueError("directions must be nonzero")
    cos = (D @ D.T) / np.outer(norms, norms)
    off = np.abs(cos - np.diag(np.diag(cos)))
    if off.max() > orth_tol:
        raise ValueError(f"directions are not orthogonal (max |cos| = {off.max():.3g})")
    g0 = np.asarray(gradient_fn(x), dtype=np.float64)
    H = np.zeros((x.size, x.size))
    for d, n in zip(D, norms):
        dG = np.asarray(gradient_fn(x + d), dtype=np.float64) - g0
        H += np.outer(dG, d) / n**2
    return H
