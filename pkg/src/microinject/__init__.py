"""Rate-dependent membrane model of cell microinjection."""

__version__ = "0.1.0"

from .errors import (ConfigError, ConvergenceError, DetectionError, DomainError,  # noqa: E402
                     InfeasibleError, MicroinjectError)
from .material import MaterialParams, RateCoefficients, SpeedState, elastic_coefficient  # noqa: E402
from .equilibrium import ProblemSetup, solve_equilibrium  # noqa: E402
from .response import distribution_profile, force_at_deformation, force_deformation_curve  # noqa: E402
