"""Exception types shared across the package.

Verification failures of mathematical identities raise
``InternalConsistencyError``: the identities are theorems, so a violation
beyond the stated tolerance signals a pipeline bug, not bad data.
"""


class MfturbError(Exception):
    """Base class for all package errors."""


class ArgumentError(MfturbError, ValueError):
    """Invalid argument combination (e.g. q == p where a limit is required)."""


class ResolutionError(MfturbError, ValueError):
    """Requested scale is not resolvable on the grid."""


class ScaleError(MfturbError, ValueError):
    """Scale outside (0, 1): the log base of the exponents degenerates."""


class DomainError(MfturbError, ValueError):
    """Requested moment order lies outside the effective domain."""


class CapacityError(MfturbError, ValueError):
    """Synthetic construction does not fit in the periodic box."""


class InternalConsistencyError(MfturbError, AssertionError):
    """Two equivalent computation routes disagree beyond tolerance."""


class InconsistentInputError(MfturbError, ValueError):
    """Input curves violate a structural requirement (e.g. D(0) != 3)."""


class ConvergenceError(MfturbError, ArithmeticError):
    """An integral transform does not converge on the given input."""


class FitError(MfturbError, ValueError):
    """Power-law fit impossible on the requested range."""


class SpecFormatError(MfturbError, ValueError):
    """Malformed generator spec file."""
