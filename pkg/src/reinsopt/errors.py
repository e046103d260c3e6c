"""Exception types shared across the package."""


class ReinsError(Exception):
    """Base class for all package errors."""


class InfeasibleCalibration(ReinsError, ValueError):
    """No shape parameter in the family's valid range matches the request."""


class MomentDivergence(ReinsError, ValueError):
    """A requested raw moment is infinite for the given severity law."""


class QuadratureFailure(ReinsError, ArithmeticError):
    """A numerical integral could not reach its tolerance."""


class DegenerateDerivative(ReinsError, ArithmeticError):
    """K'(1 - delta) is not strictly negative."""


class StructureViolation(ReinsError):
    """psi_lambda has a positive-set shape that no one/two-layer contract can express."""


class AllInfeasible(ReinsError):
    """Expected surplus is non-positive for every candidate attachment."""


class InsufficientPoints(ReinsError, ValueError):
    """Too few usable points for a regression."""


class ConfigError(ReinsError, ValueError):
    """Invalid experiment configuration."""
