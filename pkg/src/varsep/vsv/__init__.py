"""Bilevel search for the closest separable state, plus witness construction."""

from .core import (
    ANNEALING,
    OPTIMIZERS,
    SINUSOIDAL,
    AnnealingSchedule,
    BudgetExhausted,
    Point,
    SinusoidFit,
    VsvConfig,
    VsvObjective,
    VsvResult,
    coordinate_sinusoidal_step,
    fit_sinusoid,
    run_vsv,
)
from .lower import LowerSolution, kkt_gap, lower_solve, project_simplex
from .witness import Witness, build_witness, product_expectation_max

__all__ = [
    "ANNEALING",
    "OPTIMIZERS",
    "SINUSOIDAL",
    "AnnealingSchedule",
    "BudgetExhausted",
    "LowerSolution",
    "Point",
    "SinusoidFit",
    "VsvConfig",
    "VsvObjective",
    "VsvResult",
    "Witness",
    "build_witness",
    "coordinate_sinusoidal_step",
    "fit_sinusoid",
    "kkt_gap",
    "lower_solve",
    "product_expectation_max",
    "project_simplex",
    "run_vsv",
]
