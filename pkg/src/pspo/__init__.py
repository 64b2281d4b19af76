"""Parallel simultaneous perturbation optimization for noisy black-box objectives."""
from .core import (
    DimensionError,
    EvalRecord,
    EvaluationError,
    Objective,
    derive_seed,
    estimate_noise_variance,
    evaluate_batch,
)
from .gradient import (
    GradientEstimate,
    RankDeficientError,
    ToleranceSpec,
    function_differences,
    least_squares_gradient,
    min_norm_gradient,
    psp_gradient,
    required_rounds,
    rounds_for_tolerance,
)
from .hessian import ReducedHessian, curvature_along, full_hessian_estimate, reduced_hessian
from .optimizers import (
    OptimizerTrace,
    PspoConfig,
    SpsaConfig,
    StopCriteria,
    StopReason,
    pspo_minimize,
    spsa2_minimize,
)
from .perturbation import PerturbationMatrix, build_perturbations, flip_column, sample_delta0, spans_space

__version__ = "0.1.0"

__all__ = [
    "DimensionError",
    "EvalRecord",
    "EvaluationError",
    "GradientEstimate",
    "Objective",
    "OptimizerTrace",
    "PerturbationMatrix",
    "PspoConfig",
    "RankDeficientError",
    "ReducedHessian",
    "SpsaConfig",
    "StopCriteria",
    "StopReason",
    "ToleranceSpec",
    "build_perturbations",
    "curvature_along",
    "derive_seed",
    "estimate_noise_variance",
    "evaluate_batch",
    "flip_column",
    "full_hessian_estimate",
    "function_differences",
    "least_squares_gradient",
    "min_norm_gradient",
    "psp_gradient",
    "pspo_minimize",
    "reduced_hessian",
    "required_rounds",
    "rounds_for_tolerance",
    "sample_delta0",
    "spans_space",
    "spsa2_minimize",
]
