"""Black-box objective contract, seeding and batch evaluation.

Objectives are deterministic maps ``(x, seed) -> float``: noise comes only
from the seed, so any evaluation can be replayed.  Estimators above this
module never call an objective directly, they go through
:func:`evaluate_batch` (or the array-returning :func:`evaluate_values`) so
that every evaluation is counted and may run concurrently.
"""
from __future__ import annotations

import logging
import threading
import time
from concurrent.futures import Executor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

_MASK64 = (1 << 64) - 1


class DimensionError(ValueError):
    """A point does not have the dimension the objective expects."""


class EvaluationError(RuntimeError):
    """An objective evaluation returned a non-finite value."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(*keys: int) -> int:
    """Mix integer keys, e.g. ``(run_seed, iteration, slot)``, into a 64-bit seed.

    The mapping is a fold of the splitmix64 finaliser, so nearby keys give
    unrelated seeds and the result does not depend on evaluation order.
    """
    h = 0x6A09E667F3BCC908
    for key in keys:
        h = _splitmix64(h ^ (int(key) & _MASK64))
    return h


def derive_seeds(base: int, n: int, *prefix: int) -> np.ndarray:
    """Seeds ``derive_seed(base, *prefix, i)`` for ``i in range(n)`` as uint64."""
    return np.array([derive_seed(base, *prefix, i) for i in range(n)], dtype=np.uint64)


def _splitmix64_array(x: np.ndarray) -> np.ndarray:
    x = x + np.uint64(0x9E3779B97F4A7C15)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def seeded_normal(seeds) -> np.ndarray:
    """One standard normal draw per seed, independent of batch composition.

    Uses two splitmix64 outputs as uniforms and the Box-Muller transform, so
    ``seeded_normal([s])[0] == seeded_normal([t, s])[1]`` always holds.
    """
    s = np.atleast_1d(np.asarray(seeds, dtype=np.uint64))
    with np.errstate(over="ignore"):
        a = _splitmix64_array(s)
        b = _splitmix64_array(a ^ np.uint64(0xD1B54A32D192ED03))
    # 53-bit mantissas; u1 in (0, 1] keeps the log finite
    u1 = ((a >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
    u2 = (b >> np.uint64(11)).astype(np.float64) * 2.0**-53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def as_param_vector(values, dim: Optional[int] = None) -> np.ndarray:
    """Validate and copy ``values`` into a finite, 1-D float64 array."""
    x = np.array(values, dtype=np.float64, ndmin=1)
    if x.ndim != 1 or x.size < 1:
        raise DimensionError(f"parameter vector must be 1-D and non-empty, got shape {x.shape}")
    if dim is not None and x.size != dim:
        raise DimensionError(f"expected dimension {dim}, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError("parameter vector has non-finite entries")
    return x


class Objective:
    """A replayable noisy black-box function.

    Parameters
    ----------
    fn : callable
        ``fn(x, seed) -> float``.  Must be deterministic in ``(x, seed)`` and
        safe to call from several threads at once.
    dim : int
        Dimension of the parameter vector.
    batch_fn : callable, optional
        Vectorised form ``batch_fn(X, seeds) -> values`` for an ``(n, dim)``
        array.  Must agree exactly with ``fn`` row by row.
    noise_sigma : float, optional
        Known noise standard deviation, if any.
    """

    def __init__(
        self,
        fn: Callable[[np.ndarray, int], float],
        dim: int,
        *,
        batch_fn: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None,
        noise_sigma: Optional[float] = None,
        name: str = "objective",
    ):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        if noise_sigma is not None and noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        self.fn = fn
        self.dim = int(dim)
        self.batch_fn = batch_fn
        self.noise_sigma = noise_sigma
        self.name = name
        self._count = 0
        self._lock = threading.Lock()

    @property
    def evaluations(self) -> int:
        """Total number of evaluations issued against this objective."""
        return self._count

    def _add(self, n):
        with self._lock:
            self._count += n

    def __call__(self, x, seed: int) -> float:
        self._add(1)
        return float(self.fn(np.asarray(x, dtype=np.float64), int(seed)))

    def __repr__(self):
        return f"Objective({self.name!r}, dim={self.dim})"


@dataclass(frozen=True)
class EvalRecord:
    point: np.ndarray
    seed: int
    value: float
    wall_time: float
    failed: bool = field(default=False)


def _check_points(objective: Objective, points, seeds):
    try:
        X = np.asarray(points, dtype=np.float64)
    except ValueError as exc:
        raise DimensionError(f"points have inconsistent dimensions: {exc}") from exc
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[0] < 1:
        raise DimensionError("points must be a non-empty sequence of vectors")
    if X.shape[1] != objective.dim:
        raise DimensionError(f"points have dimension {X.shape[1]}, objective expects {objective.dim}")
    s = np.asarray(seeds, dtype=np.uint64).ravel()
    if s.size != X.shape[0]:
        raise ValueError(f"got {X.shape[0]} points but {s.size} seeds")
    return X, s


def evaluate_values(objective: Objective, points, seeds, executor: Optional[Executor] = None):
    """Evaluate a batch and return ``(values, wall_times)`` as arrays.

    Order of the outputs matches the order of ``points``.  A vectorised
    ``batch_fn`` takes precedence; otherwise each point is evaluated
    individually, through ``executor.map`` when an executor is given.
    Non-finite values are returned as-is; callers decide how to treat them.
    """
    X, s = _check_points(objective, points, seeds)
    n = X.shape[0]
    if objective.batch_fn is not None:
        t0 = time.perf_counter()
        values = np.asarray(objective.batch_fn(X, s), dtype=np.float64).reshape(n)
        objective._add(n)
        walls = np.full(n, (time.perf_counter() - t0) / n)
        return values, walls

    def one(i):
        t0 = time.perf_counter()
        v = objective.fn(X[i], int(s[i]))
        return float(v), time.perf_counter() - t0

    if executor is None:
        out = [one(i) for i in range(n)]
    else:
        out = list(executor.map(one, range(n)))
    objective._add(n)
    values = np.array([v for v, _ in out], dtype=np.float64)
    walls = np.array([w for _, w in out], dtype=np.float64)
    return values, walls


def evaluate_batch(
    objective: Objective,
    points: Sequence,
    seeds: Sequence[int],
    executor: Optional[Executor] = None,
) -> list[EvalRecord]:
    """Evaluate ``objective`` at each ``(point, seed)`` pair.

    Records come back in input order whatever the completion order of the
    workers.  Non-finite results are flagged with ``failed=True`` rather than
    raising, so the caller sees the whole batch.
    """
    X, s = _check_points(objective, points, seeds)
    values, walls = evaluate_values(objective, X, s, executor)
    records = []
    for i in range(X.shape[0]):
        v = float(values[i])
        failed = not np.isfinite(v)
        if failed:
            logger.warning("evaluation %d of %s returned %r", i, objective.name, v)
        records.append(EvalRecord(X[i].copy(), int(s[i]), v, float(walls[i]), failed))
    return records


def estimate_noise_variance(
    objective: Objective,
    point,
    replicates: int = 10,
    seed: int = 0,
    executor: Optional[Executor] = None,
) -> float:
    """Unbiased sample variance of ``replicates`` evaluations at one point."""
    if replicates < 2:
        raise ValueError(f"need at least 2 replicates, got {replicates}")
    x = as_param_vector(point, objective.dim)
    seeds = derive_seeds(seed, replicates, 0x5EED)
    values, _ = evaluate_values(objective, np.tile(x, (replicates, 1)), seeds, executor)
    if not np.all(np.isfinite(values)):
        raise EvaluationError("non-finite value while estimating noise variance")
    return float(np.var(values, ddof=1))
