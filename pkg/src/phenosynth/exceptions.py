"""Exception hierarchy shared across the package."""


class PhenosynthError(Exception):
    """Base class for all errors raised by phenosynth."""


class ConfigurationError(PhenosynthError, ValueError):
    """Invalid parameters or configuration."""


class SchemaError(PhenosynthError, KeyError):
    """A required feature is missing from a schema or row."""

    def __init__(self, message, feature=None):
        super().__init__(message)
        self.feature = feature

    def __str__(self):
        # KeyError quotes its argument; keep the plain message
        return str(self.args[0])


class CohortParseError(PhenosynthError, ValueError):
    """A cohort file could not be read."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DegenerateTableError(PhenosynthError, ValueError):
    """An operation would leave a table without usable content."""


class StratificationError(PhenosynthError, ValueError):
    """Labels cannot be stratified as requested."""


class UndefinedMetricError(PhenosynthError, ValueError):
    """A metric is undefined for the given labels (e.g. no positives)."""
