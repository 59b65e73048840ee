"""Exception hierarchy shared by every stage.

Plain argument mistakes raise the builtin ``ValueError``; the classes here
mark the failure kinds the CLI maps onto exit codes.
"""


class CoughXAIError(Exception):
    """Base class for pipeline errors."""

    exit_code = 1


class ConfigError(CoughXAIError, ValueError):
    """Invalid or incomplete configuration."""

    exit_code = 2


class DataError(CoughXAIError):
    """Input data cannot support the requested computation."""

    exit_code = 3


class DegenerateInputError(DataError, ValueError):
    """Input is well formed but numerically degenerate (e.g. all-zero power)."""


class FormatError(CoughXAIError, ValueError):
    """A file or byte stream does not follow its documented layout."""

    exit_code = 4


class UnsupportedFormatError(FormatError):
    """Recognised container, but an encoding we do not decode."""


class ValidationError(FormatError):
    """A model description is internally inconsistent (e.g. shape mismatch)."""
