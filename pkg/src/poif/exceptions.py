"""Error taxonomy shared across the package.

The CLI maps these onto process exit codes, so library code should raise
the most specific class that applies.
"""


class PoifError(Exception):
    """Base class for all package-specific failures."""


class ConfigError(PoifError):
    """Invalid configuration value or unresolvable run setup (exit code 2)."""


class DataError(PoifError):
    """Malformed or inconsistent input data (exit code 3)."""


class DegenerateReferenceError(DataError):
    """Reference set carries no usable spread for calibration (exit code 4)."""


class UndefinedMetricError(DataError):
    """Metric is undefined for the given inputs, e.g. a single-class score set."""
