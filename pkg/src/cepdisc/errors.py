"""Exception hierarchy shared across the package.

Data-side problems (bad arguments, unreadable files, too few replicates)
derive from DomainError; numerical failures (non-convergence, conditioning)
derive from NumericalError. The CLI maps the former to exit code 2 and the
latter to exit code 3.
"""


class CepdiscError(Exception):
    """Base class for all package errors."""


class DomainError(CepdiscError):
    """An argument or value is outside the operation's domain."""


class ParseError(DomainError):
    """A data file could not be parsed; message names file and line."""


class InsufficientDataError(DomainError):
    """Too few replicates or populations for the requested operation."""


class ConfigurationError(DomainError):
    """A configuration value or combination is invalid."""


class NumericalError(CepdiscError):
    """A numerical routine failed."""


class ConvergenceError(NumericalError):
    """Iteration limit reached before meeting the tolerance.

    Attributes
    ----------
    last_iterate : object
        The final iterate (estimator-specific) when the limit was hit.
    detail : object
        Optional context, e.g. the list of frequency indices that failed.
    """

    def __init__(self, message, last_iterate=None, detail=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.detail = detail


class ConditioningError(NumericalError):
    """A matrix factorization failed even after regularization."""
