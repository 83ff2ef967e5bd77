"""Exception hierarchy shared across the package.

The CLI maps these to exit codes: ConfigError -> 1, DataError -> 2,
anything else -> 3.
"""


class TrendscanError(Exception):
    pass


class ConfigError(TrendscanError):
    """Invalid run configuration or arguments."""


class DataError(TrendscanError):
    """Problems with input data: missing files, bad headers, empty datasets."""
