"""Exception types shared across the toolkit."""


class SparseDoaError(Exception):
    """Base class for all toolkit errors."""


class DomainError(SparseDoaError, ValueError):
    """An angle, frequency, or parameter lies outside its valid domain."""


class DegenerateInputError(SparseDoaError, ValueError):
    """Input is structurally degenerate (zero column, empty data, ...)."""


class SizeLimitError(SparseDoaError, ValueError):
    """Problem exceeds a hard size limit of a brute-force routine."""


class InvalidScenarioError(SparseDoaError, ValueError):
    """A simulation scenario violates its invariants."""


class NotRedundancyArrayError(SparseDoaError, ValueError):
    """SLA does not realize every lag needed for co-array averaging."""


class UnsupportedGeometryError(SparseDoaError, ValueError):
    """Estimator does not support the given array geometry."""


class FeasibilityError(SparseDoaError, ValueError):
    """Constraint set of an optimization problem is empty."""


class ConfigError(SparseDoaError, ValueError):
    """Malformed experiment or solver configuration."""
