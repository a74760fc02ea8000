"""
Custom exceptions shared by every annealmap app.
"""


class AnnealmapError(Exception):
    """Base class for errors raised by annealmap."""
    pass


class ContractViolationError(AnnealmapError, ValueError):
    """Raised when a caller breaks an operation's precondition."""
    pass


class DomainError(ContractViolationError):
    """Raised when a point lies outside the unit hypercube."""
    pass


class CapabilityError(AnnealmapError):
    """Raised when a request exceeds what the implementation supports."""
    pass


class DegenerateRuleError(AnnealmapError):
    """
    Raised when quadrature weights vanish or do not sum to a positive value.

    Usually signals a surrogate/target mismatch upstream.
    """
    pass


class InternalInvariantError(AnnealmapError):
    """Raised when a guaranteed property fails (a bug, not bad input)."""
    pass
