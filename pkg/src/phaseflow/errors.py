"""Exception types shared across the package.

Every contract violation raises one of these, with a message naming the
violated bound or the offending input, so callers can distinguish bad
configuration (their fault) from numerical breakdown (the run's fault).
"""


class PhaseflowError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(PhaseflowError, ValueError):
    """An input lies outside the documented domain of a function or type."""


class CoverageError(PhaseflowError, ValueError):
    """A grid fails to cover the mass it is asked to represent.

    Raised when normalization checks fail, when significant probability
    mass reaches a clamped boundary, or when a grid is too short or too
    coarse for the requested construction.
    """


class SupportError(PhaseflowError, ValueError):
    """A density was evaluated where it has (numerically) no support."""


class StabilityError(PhaseflowError, ValueError):
    """A time step violates an explicit-scheme stability bound."""


class UnsupportedModelError(PhaseflowError, ValueError):
    """A routine was handed a model outside the class it can integrate."""


class EvaluationError(PhaseflowError, ArithmeticError):
    """A numerical evaluation produced a non-finite result."""


class ConfigError(PhaseflowError, ValueError):
    """A run configuration is malformed; the message names the bad key."""
