"""Exception hierarchy and the CLI exit-code contract.

Exit codes are a stable scripting interface: 0 success, 2 configuration
error, 3 data or convergence error, 4 I/O error.
"""

from __future__ import annotations

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_IO = 4


class GalError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = EXIT_DATA


class ConfigError(GalError):
    """Invalid configuration: bad parameters, malformed config documents,
    schema violations, unknown keys."""

    exit_code = EXIT_CONFIG


class DomainError(ConfigError):
    """Argument outside the mathematical domain of a formula
    (e.g. n*p < 3 where log(np) must exceed 1, or negative time)."""


class DimensionError(ConfigError):
    """Shape mismatch between arrays that must agree."""


class SizeError(ConfigError):
    """Input size outside the supported range (e.g. exact assignment
    beyond 64 points)."""


class InputError(ConfigError):
    """Structurally invalid input (empty collections, missing entries)."""


class DataError(GalError):
    """Bad numeric data at run time: non-finite costs, nonpositive
    distances where logs are required."""

    exit_code = EXIT_DATA


class OutputError(GalError):
    """Failure to persist results."""

    exit_code = EXIT_IO
