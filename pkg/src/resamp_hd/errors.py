"""Exception types raised across the package."""


class CapacityError(ValueError):
    """Exact enumeration was requested beyond what is tractable."""


class InfeasibleLevelError(ValueError):
    """A confidence bound is vacuous at this sample size and level."""


class UnsupportedGuaranteeError(ValueError):
    """The requested combination has no proven level guarantee."""


class UnsupportedSchemeError(ValueError):
    """The weight scheme lacks a constant the formula needs."""


class StepDownNotConverged(RuntimeError):
    """The step-down iteration hit its cap before reaching a fixed point."""

    def __init__(self, message: str, trace):
        super().__init__(message)
        self.trace = trace
