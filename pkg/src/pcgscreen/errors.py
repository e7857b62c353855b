"""Exception types shared across the package."""


class PcgScreenError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 3


class ConfigError(PcgScreenError):
    """Invalid configuration, parameters, or CLI usage."""

    exit_code = 1


class DataError(PcgScreenError):
    """Malformed, inconsistent, or out-of-contract input data."""

    exit_code = 2


class NumericError(PcgScreenError):
    """Internal numerical failure (non-convergence, overflow, NaN)."""

    exit_code = 3
