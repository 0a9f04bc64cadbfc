"""Epidemic models with varying infectivity: stochastic simulation, deterministic limit, early phase."""
from .durations import BetaAffine, Deterministic, Exponential, IndependentDurations, JointTable
from .errors import ConfigError, InvalidParameterError, SolverError
from .infectivity import (InfectivityLaw, make_law_constant, make_law_triangular, mean_infectivity,
                          mixture, scale_law)

__version__ = "0.1.0"
