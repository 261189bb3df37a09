"""Error hierarchy.  Each class carries the CLI error category and exit code."""


class MicroinjectError(Exception):
    category = "domain"
    exit_code = 3


class ConfigError(MicroinjectError):
    category = "config"
    exit_code = 2


class DomainError(MicroinjectError, ValueError):
    category = "domain"
    exit_code = 3


class StateError(DomainError):
    """Membrane state outside the admissible region (e.g. lambda_m < |omega|)."""


class IntegrationError(MicroinjectError):
    category = "convergence"
    exit_code = 4

    def __init__(self, msg, psi=None):
        super().__init__(msg)
        self.psi = psi


class EventNotFound(IntegrationError):
    pass


class ConvergenceError(MicroinjectError):
    category = "convergence"
    exit_code = 4

    def __init__(self, msg, best_residual=None):
        super().__init__(msg)
        self.best_residual = best_residual


class InfeasibleError(ConvergenceError):
    pass


class CalibrationError(ConvergenceError):
    pass


class FitError(DomainError):
    pass


class DetectionError(MicroinjectError):
    category = "detection"
    exit_code = 5


class IOFailure(MicroinjectError):
    category = "io"
    exit_code = 6
