"""Exception types raised across the package."""


class SwarmError(Exception):
    """Base class for all package errors."""


class ValidationError(SwarmError, ValueError):
    """Invalid configuration or input data (CLI exit code 2)."""


class GenerationFailed(SwarmError):
    pass


class EigenFailure(SwarmError):
    pass


class EmptyMdsg(SwarmError):
    pass


class NoDamage(SwarmError):
    pass


class ShapeMismatch(SwarmError, ValueError):
    pass


class InconsistentOrder(SwarmError, ValueError):
    pass


class StepBudgetExceeded(SwarmError):
    """The simulation loop ran past its hard step cap. Indicates a bug."""


class NonTermination(StepBudgetExceeded):
    """The potential-field loop exceeded its analytic step bound."""


class PolicySpeedViolation(SwarmError):
    pass


class NoConnectedCandidate(SwarmError):
    pass


class NumericalOverflow(SwarmError):
    pass


class FormatError(SwarmError, ValueError):
    """Model or scenario file has the wrong magic, version or dimensions."""
