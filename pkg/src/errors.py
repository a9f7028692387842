"""
Exception hierarchy shared by the library and the command line.

Each error carries the process exit code the CLI returns for it.
"""


class SpftsError(Exception):
    """Base class for all errors raised by this package"""

    exit_code = 1
    stage = None


class ConfigError(SpftsError, ValueError):
    """Invalid configuration, arguments or sizes"""

    exit_code = 2


class SizingError(ConfigError):
    """Basis grid too coarse for the requested truncation order"""


class DimensionError(ConfigError):
    """Array or operator shapes do not agree"""


class ContextMismatchError(DimensionError):
    """Objects built on different basis contexts were combined"""


class DataError(SpftsError, ValueError):
    """Input data that cannot be used"""

    exit_code = 3


class CsvParseError(DataError):
    """A CSV row could not be parsed"""

    def __init__(self, message: str, line: int = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DuplicateKeyError(DataError):
    """The same (series, time, grid) cell appears more than once"""


class InconsistentDimensionsError(DataError):
    """The panel cannot be arranged as a full series x time x grid cube"""


class NumericError(SpftsError, ArithmeticError):
    """A numerical quantity is undefined or a routine failed to converge"""

    exit_code = 4
