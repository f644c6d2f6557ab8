"""Exception types raised across the package."""


class PifnetError(Exception):
    """Base class for every error this package raises on purpose."""


class SchemaError(PifnetError):
    """A required column is missing from an input file."""


class FormatError(PifnetError):
    """An input file violates the expected layout (timestamps, gaps, cells)."""


class DataQualityError(PifnetError):
    """Input data is too damaged to repair (e.g. too many missing values)."""


class InsufficientDataError(PifnetError):
    """Not enough rows to perform the requested operation."""


class ParameterError(PifnetError):
    """An argument is outside its documented domain."""


class ContractError(PifnetError):
    """Caller broke an internal contract (shape mismatch, missing cache)."""


class ConvergenceError(PifnetError):
    """An iterative solver ran out of iterations.

    Carries the final KKT violation so callers can report how far the
    solver was from optimality.
    """

    def __init__(self, message: str, kkt_violation: float | None = None):
        super().__init__(message)
        self.kkt_violation = kkt_violation


class TractabilityError(PifnetError):
    """Exact enumeration was requested for a problem too large to enumerate."""


class CorrectionImpossibleError(PifnetError):
    """Every point is flagged, so no neighbor is available for repair."""


class ProbeError(PifnetError):
    """A finite-difference probe produced a non-finite objective value."""


class UndefinedMetricError(PifnetError):
    """A metric is mathematically undefined for the given inputs."""


class NonFiniteLossError(PifnetError):
    """Training produced a non-finite loss and was aborted."""
