"""Exception hierarchy shared across the package."""


class SorailError(Exception):
    """Base class; ``code`` is used for machine-readable CLI error records."""

    code = "error"


class InvalidRoute(SorailError):
    code = "invalid_route"


class InvalidDwell(SorailError):
    code = "invalid_dwell"


class DanglingReference(SorailError):
    code = "dangling_reference"


class InvalidNetwork(SorailError):
    code = "invalid_network"


class CompressionInfeasible(SorailError):
    code = "compression_infeasible"


class InvalidStop(SorailError):
    code = "invalid_stop"


class ModelIncomplete(SorailError):
    code = "model_incomplete"


class NoRoute(SorailError):
    code = "no_route"


class DeadlockDetected(SorailError):
    code = "deadlock"

    def __init__(self, message, cycle=()):
        super().__init__(message)
        self.cycle = tuple(cycle)


class RejectedPlan(SorailError):
    code = "rejected_plan"


class RepairInfeasible(SorailError):
    code = "repair_infeasible"
