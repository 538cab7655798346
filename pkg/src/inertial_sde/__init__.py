"""Simulation and verification tools for stochastic inertial optimization dynamics."""

from .errors import (ConfigurationError, DampingOvershootWarning, DomainError, HypothesisViolation,
                     InertialSDEError, MonteCarloError, NumericalError)
from .problems import CompositeProblem, NonsmoothTerm, SmoothObjective, builtin_problem, problem_from_config
from .schedules import (DampingSchedule, DiffusionSchedule, TikhonovSchedule, I_transform, big_gamma,
                        exp_neg_A, integrability_class, theta)
from .sde import (BrownianPath, TimeGrid, sample_brownian, simulate_first_order, simulate_inertial,
                  simulate_scaled_first_order)

__version__ = "0.1.0"
