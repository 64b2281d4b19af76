"""Per-iteration records shared by both optimizers."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class StopReason(str, enum.Enum):
    GRAD_NORM = "grad_norm"
    STEP_SIZE = "step_size"
    MAX_ITERS = "max_iters"
    CALLBACK = "callback"
    FAILURE = "failure"


@dataclass(frozen=True)
class StopCriteria:
    """Any enabled criterion stops the run.  ``None`` disables a tolerance."""

    grad_norm_tol: Optional[float] = None
    step_tol: Optional[float] = None
    max_iters: int = 100

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        for name in ("grad_norm_tol", "step_tol"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive or None")


@dataclass
class IterationRecord:
    """State after iteration ``k``; ``theta`` is the iterate it produced."""

    k: int
    theta: np.ndarray
    objective_mean: float
    grad_norm: float
    M: int
    alpha: float
    beta: float
    cumulative_evals: int
    restart: bool = False
    capped: bool = False
    fallback: bool = False
    step_norm: float = 0.0
    curvature: float = math.nan
    gradient: Optional[np.ndarray] = field(default=None, repr=False)
    direction: Optional[np.ndarray] = field(default=None, repr=False)


@dataclass
class OptimizerTrace:
    optimizer: str
    theta0: np.ndarray
    setup_evals: int = 0
    iterations: list = field(default_factory=list)
    converged: bool = False
    stop_reason: Optional[StopReason] = None
    error: Optional[str] = None
    initial_gradient: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def total_evals(self) -> int:
        return self.iterations[-1].cumulative_evals if self.iterations else self.setup_evals

    @property
    def final_theta(self) -> np.ndarray:
        return self.iterations[-1].theta if self.iterations else self.theta0

    def iterations_to(self, predicate: Callable[[np.ndarray], bool], censor: Optional[int] = None) -> int:
        """First iteration count after which ``predicate(theta)`` holds.

        Returns 0 if it already holds at ``theta0``; if it never holds,
        returns ``censor`` (default: the number of recorded iterations).
        """
        if predicate(self.theta0):
            return 0
        for rec in self.iterations:
            if predicate(rec.theta):
                return rec.k + 1
        return len(self.iterations) if censor is None else censor
