from .quadratic import NoisyQuadratic, noisy_quadratic_eval
from .sir import (
    ConservationError,
    EpidemicSeries,
    SirParams,
    load_epidemic_csv,
    simulate_sir,
    sir_neg_log_pseudolikelihood,
    sir_objective,
    write_epidemic_csv,
)

__all__ = [
    "ConservationError",
    "EpidemicSeries",
    "NoisyQuadratic",
    "SirParams",
    "load_epidemic_csv",
    "noisy_quadratic_eval",
    "simulate_sir",
    "sir_neg_log_pseudolikelihood",
    "sir_objective",
    "write_epidemic_csv",
]
