"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`AmrError`.
The CLI maps :class:`ValidationError` to exit code 2 and everything else to 3.
"""


class AmrError(Exception):
    """Base class for package errors."""

    exit_code = 3


class ValidationError(AmrError, ValueError):
    """Bad arguments or malformed input data."""

    exit_code = 2


class DomainError(ValidationError):
    """Coordinates outside the valid range of a metric."""


class MetricContractError(AmrError):
    """A user-supplied metric returned a negative or NaN distance."""


class ParseError(ValidationError):
    """A file could not be parsed."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class EstimationError(AmrError):
    """An estimator is undefined for the data at hand (e.g. an empty arm)."""


class KrigingError(AmrError):
    """The kriging system could not be solved."""


class CapacityError(AmrError):
    """A problem is too large for the exact method requested."""
