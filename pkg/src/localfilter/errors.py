"""Exception and warning types raised across the package."""


class ConfigError(ValueError):
    """Invalid run, mesh or decomposition configuration."""


class NumericalError(RuntimeError):
    """Non-finite values or a failed linear solve."""


class StepSizeError(NumericalError):
    """A time-step system became singular; reduce the step or reinitialize."""


class StaleBoundaryError(RuntimeError):
    """Interface data required by a subdomain has not been exchanged yet."""


class NonConvergenceWarning(UserWarning):
    """The Schwarz loop hit its iteration cap before reaching the threshold."""
