"""Exception hierarchy.

Every error carries the CLI exit code it maps to, so the command-line layer
can translate failures without a lookup table.
"""


class FWMError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(FWMError, ValueError):
    """Malformed or incomplete configuration. ``path`` names the offending field."""

    exit_code = 2

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class DomainError(FWMError, ValueError):
    """An argument lies outside the domain of an operation."""

    exit_code = 3


class ModelError(FWMError):
    """The model produced or was handed something unphysical."""

    exit_code = 3


class SingularityError(ModelError):
    pass


class PhysicalityError(ModelError):
    pass


class PreconditionError(ModelError):
    pass


class CoverageError(ModelError):
    pass


class CutoffError(ModelError):
    pass


class FitError(ModelError):
    pass


class MatchingError(ModelError):
    pass


class ConvergenceError(FWMError):
    """A numerical procedure failed to converge."""

    exit_code = 4


class CalibrationError(ConvergenceError):
    pass


class BracketError(ConvergenceError):
    pass
