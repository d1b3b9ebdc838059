"""Exception taxonomy and process exit codes shared across the package."""

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class MicrofaceError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(MicrofaceError, ValueError):
    """Operands have incompatible or degenerate dimensions."""


class ContractError(MicrofaceError, ValueError):
    """A documented precondition or invariant was violated by the caller."""


class DataError(MicrofaceError, RuntimeError):
    """Corpus files, manifests or pair lists are missing or malformed."""


class UsageError(MicrofaceError, RuntimeError):
    """Bad command-line arguments or configuration keys."""


class NumericalAbort(MicrofaceError, RuntimeError):
    """Training produced non-finite values; the message names the first offender."""
