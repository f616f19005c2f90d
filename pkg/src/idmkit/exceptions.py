"""Exception hierarchy shared across the package."""


class IdmError(Exception):
    """Base class for all idmkit errors."""


class AgeDomainError(IdmError):
    """An age falls outside the domain an object is defined on."""

    def __init__(self, value, lo, hi):
        self.value = value
        self.lo = lo
        self.hi = hi
        super().__init__(f"age {value!r} outside domain [{lo}, {hi}]")


class OrderingError(IdmError):
    """An age pair or interval is not ordered as required."""


class DimensionError(IdmError):
    """A vector has the wrong length for the operation."""


class UnsupportedOrderError(IdmError):
    """Spline order too low for the requested operation."""


class InvalidRecordError(IdmError):
    """A subject record violates its invariants."""


class RecordConflictError(InvalidRecordError):
    """Raw rows for one subject contradict each other."""

    def __init__(self, subject_id, message, row_ids=()):
        self.subject_id = subject_id
        self.row_ids = tuple(row_ids)
        detail = f" (rows {', '.join(map(str, self.row_ids))})" if row_ids else ""
        super().__init__(f"subject {subject_id!r}: {message}{detail}")


class LikelihoodNumericError(IdmError):
    """A likelihood evaluation produced a non-finite intermediate."""

    def __init__(self, subject_id, message="non-finite likelihood contribution"):
        self.subject_id = subject_id
        super().__init__(f"subject {subject_id!r}: {message}")


class NonConvergenceError(IdmError):
    """The optimizer exhausted its iteration budget."""

    def __init__(self, message, last_params=None, gradient_norm=None, iterations=None):
        self.last_params = last_params
        self.gradient_norm = gradient_norm
        self.iterations = iterations
        super().__init__(message)


class ConfigError(IdmError):
    """A configuration file or option is invalid."""


class MissingUpstreamError(IdmError):
    """A required upstream artifact does not exist."""

    def __init__(self, path, hint):
        self.path = path
        self.hint = hint
        super().__init__(f"missing upstream file {path}: {hint}")
