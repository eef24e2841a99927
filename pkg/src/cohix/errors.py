"""Exception types shared across the toolkit."""


class CohixError(Exception):
    """Base class for all toolkit errors."""


class LayoutError(CohixError):
    """Unknown subsystem label or inconsistent tensor layout."""


class NumericalError(CohixError):
    """Input violates a numerical precondition (e.g. not Hermitian)."""


class DimensionError(CohixError):
    """Dimension mismatch or desk-scale guard violation."""


class InfiniteDivergence(CohixError):
    """Support condition violated; the divergence is +infinity."""


class DomainError(CohixError):
    """Scalar parameter outside its admissible range."""


class PreconditionError(CohixError):
    """A protocol-level precondition does not hold."""


class WitnessError(CohixError):
    """A required class-membership witness is missing or malformed."""


class SolverError(CohixError):
    """The SDP solver failed to produce a usable solution."""
