from .pspo import PspoConfig, conjugate_beta, newton_step_size, pspo_minimize
from .spsa import (
    SpsaConfig,
    hessian_estimate,
    one_sided_gradient,
    project_pd,
    spsa2_minimize,
    two_sided_gradient,
)
from .trace import IterationRecord, OptimizerTrace, StopCriteria, StopReason

__all__ = [
    "IterationRecord",
    "OptimizerTrace",
    "PspoConfig",
    "SpsaConfig",
    "StopCriteria",
    "StopReason",
    "conjugate_beta",
    "hessian_estimate",
    "newton_step_size",
    "one_sided_gradient",
    "project_pd",
    "pspo_minimize",
    "spsa2_minimize",
    "two_sided_gradient",
]
