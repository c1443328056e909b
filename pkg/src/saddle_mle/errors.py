"""Exception types raised across the package."""


class SaddleMLEError(Exception):
    """Base class for all package errors."""


class DomainError(SaddleMLEError, ValueError):
    """Argument lies outside the open validity interval of a CGF."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class InvalidOrder(SaddleMLEError, ValueError):
    """Requested derivative order is not supported."""


class NoConvergence(SaddleMLEError, ArithmeticError):
    """Root finder hit its iteration cap.

    ``bracket`` holds the last ``(lo, hi)`` arrays for the offending rows.
    """

    def __init__(self, message, bracket=None, rows=None):
        super().__init__(message)
        self.bracket = bracket
        self.rows = rows


class TooManyComponents(SaddleMLEError, ValueError):
    """Quadrature oracle refuses sums with too many non-Gaussian terms."""


class DegenerateVariance(SaddleMLEError, ArithmeticError):
    """Total variance sigma^2 + rho^2 |x|^2 is zero."""


class RankDeficient(SaddleMLEError, ArithmeticError):
    """Design matrix lacks full column rank."""


class TlsDegenerate(SaddleMLEError, ArithmeticError):
    """Shifted normal matrix of the TLS closed form is numerically singular."""


class LineSearchFailure(SaddleMLEError, ArithmeticError):
    """Line search could not make progress."""


class ZeroTruth(SaddleMLEError, ValueError):
    """Relative error requested against an all-zero reference vector."""


class EmptyGroup(SaddleMLEError, ValueError):
    """Summary requested for a grid point without records."""


class ConfigError(SaddleMLEError, ValueError):
    """Invalid run configuration."""
