"""Exception vocabulary shared across the package.

Each error class maps to one failure family so callers (and the CLI
exit-code logic) can dispatch on type rather than message text.
"""


class MatchboundsError(Exception):
    """Base class for every error raised by this package."""


class SchemaError(MatchboundsError):
    """A required column is missing or the column mapping is unusable."""


class ParseError(MatchboundsError):
    """A cell could not be parsed; message carries row and column."""


class ValidationError(MatchboundsError):
    """Structurally well-formed input violates a documented precondition."""


class EstimandUndefinedError(MatchboundsError):
    """An estimator was asked for on an assignment where it is undefined."""


class CapacityError(MatchboundsError):
    """Matching capacity cannot cover the treated arm."""


class ConfigurationError(MatchboundsError):
    """A constraint or option needs an input that was not supplied."""


class NumericError(MatchboundsError):
    """Numerical breakdown (singular covariance, simplex stall, ...)."""


class ModelError(MatchboundsError):
    """The optimization model is malformed (e.g. an unbounded LP)."""
