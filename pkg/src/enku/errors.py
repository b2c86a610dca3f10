"""Exception hierarchy shared across the package."""


class EnkuError(Exception):
    """Base class for all package errors."""


class InvalidInputError(EnkuError, ValueError):
    """Malformed, non-finite or dimensionally inconsistent input."""


class NotPSDError(InvalidInputError):
    """A matrix required to be positive semidefinite has a negative eigenvalue."""


class InsufficientSamplesError(InvalidInputError):
    """Too few particles for the requested statistic."""


class ParseError(EnkuError, ValueError):
    """A file could not be parsed; the message names the offending location."""


class SolverError(EnkuError, RuntimeError):
    """An exact solver failed to certify optimality."""


class ExperimentError(EnkuError, RuntimeError):
    """A Monte Carlo run lost too many replicates to be reported."""
