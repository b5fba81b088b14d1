"""Exception hierarchy shared by all modules.

Two families matter for the command line: domain errors (the request makes
no geometric sense, exit code 2) and numerical errors (the computation could
not reach its tolerance, exit code 3).
"""

from __future__ import annotations


class ExpanderError(Exception):
    """Base class for every error raised by this package."""


class DomainError(ExpanderError, ValueError):
    """Input lies outside the domain where the quantity is defined."""


class WindowError(DomainError):
    """Target aperture outside the attainable window of a branch."""

    def __init__(self, message: str, swept: tuple[float, float] | None = None):
        super().__init__(message)
        self.swept = swept


class TubeError(DomainError):
    """A normal graph or test point leaves the admissible tube."""


class AmbiguityError(DomainError):
    """Normal lines hit the other hypersurface more than once."""

    def __init__(self, message: str, rho: float | None = None):
        super().__init__(message)
        self.rho = rho


class RangeError(DomainError):
    """Requested radius lies beyond the computed data."""


class SizeError(DomainError):
    """A field is too short for the requested stencil."""


class NumericalError(ExpanderError, ArithmeticError):
    """A numerical procedure failed to reach its tolerance."""


class IntegrationError(NumericalError):
    """The profile ODE blew up, collapsed onto the axis, or ran out of horizon."""

    def __init__(self, message: str, last_state=None):
        super().__init__(message)
        self.last_state = last_state


class ToleranceError(NumericalError):
    """Step rejections cascaded below the representable step size."""


class NoAsymptoteError(NumericalError):
    """The far field does not settle onto a cone ray."""


class UnreliableFitError(NumericalError):
    """A fitted exponent or limit does not meet its reliability threshold."""
