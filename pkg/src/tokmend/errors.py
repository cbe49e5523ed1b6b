"""Exception hierarchy shared across the toolkit.

Two top-level families map onto the CLI exit codes: InputError (bad
arguments, missing files, malformed values; exit 1) and ValidationError
(well-formed files whose contents violate a schema or invariant; exit 2).
"""


class TokmendError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class InputError(TokmendError):
    """Caller supplied an invalid argument, path, or value."""

    exit_code = 1


class ConflictError(InputError):
    """Duplicate vocabulary items; carries the offending surfaces."""

    def __init__(self, message: str, offenders: list[str] | None = None):
        super().__init__(message)
        self.offenders = offenders or []


class DegenerateInputError(InputError):
    """Input is structurally valid but makes the requested quantity undefined."""


class InsufficientStatsError(InputError):
    """Not enough data points to estimate the requested statistics."""


class ValidationError(TokmendError):
    """A file or data structure failed schema or consistency validation."""

    exit_code = 2


class SchemaError(ValidationError):
    """File contents do not match the expected schema."""


class ConsistencyError(ValidationError):
    """Two artifacts that must agree (tokenizer vs. embeddings, etc.) do not."""


class MissingHiddenError(ValidationError):
    """A selected trace occurrence has no stored hidden vector."""


class ConditioningWarning(UserWarning):
    """Numerical fit ran on rank-deficient or near-degenerate data."""
