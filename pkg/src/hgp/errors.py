"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes (config -> 1, data -> 2,
numerical -> 3), so library code should raise the most specific type.
"""


class HgpError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(HgpError):
    """Invalid configuration: bad flag combinations, impossible plans."""


class DataError(HgpError):
    """Problems with user-supplied data files or their contents."""


class DimensionError(HgpError):
    """Mismatched array dimensions between inputs, models, or queries."""


class NumericalError(HgpError):
    """Numerical failure (non-finite values, factorization breakdown)."""


class CholeskyError(NumericalError):
    """Cholesky factorization failed even after jitter escalation."""


class TaskError(HgpError):
    """A task submitted to the executor raised; carries the task index."""

    def __init__(self, index: int, cause: BaseException):
        self.index = index
        self.cause = cause
        super().__init__(f"task {index} failed: {cause!r}")
