"""Exception types shared across the toolkit."""


class MvsdeError(Exception):
    """Base class for toolkit errors."""


class OperatorFailure(MvsdeError):
    """Resolvent evaluation failed (empty domain / non-convergent user operator)."""

    def __init__(self, message, lam=None, x=None):
        super().__init__(message)
        self.lam = lam
        self.x = x


class UnsupportedCheck(MvsdeError):
    """A diagnostic was requested that the object cannot support."""


class CoefficientEvaluationError(MvsdeError):
    """Coefficient returned a non-finite or mis-shaped value."""


class GridMismatch(MvsdeError):
    """Two path objects live on incompatible grids."""


class PreconditionError(MvsdeError):
    """A solver precondition is violated by the configuration."""


class InversionUnavailable(MvsdeError):
    """Closed-form rate inversion not applicable (non-zero operator or singular sigma)."""


class ConfigError(MvsdeError):
    """Run configuration failed validation."""
