"""Exception hierarchy shared across the package.

Each class maps onto one CLI exit code so command failures are
distinguishable by scripts.
"""


class LsbsegError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(LsbsegError):
    """Invalid or inconsistent run configuration."""

    exit_code = 2


class DataError(LsbsegError):
    """Malformed, missing, or mismatched data (images, masks, manifests)."""

    exit_code = 3


class NumericError(LsbsegError):
    """Numerical failure during training or evaluation (NaN/Inf loss)."""

    exit_code = 4
