"""Domain error hierarchy.

Every error the kernel can raise maps 1:1 to a stable machine-readable code
(the class name); the HTTP layer relies on that mapping being total.
"""


class KernelError(Exception):
    """Base class for all domain errors."""

    def __init__(self, message: str = "", detail=None):
        super().__init__(message)
        self.detail = detail

    @property
    def code(self) -> str:
        return type(self).__name__


# kernel-store
class UnknownItem(KernelError):
    pass


class VersionConflict(KernelError):
    """expectedVersion was stale; caller must re-read and retry."""


class DuplicatePropertyName(KernelError):
    pass


class UnknownDescription(KernelError):
    pass


class SchemaValidationFailed(KernelError):
    """detail carries a list of (path, message) diagnostics."""


class OutcomeAlreadyPresent(KernelError):
    pass


class UnknownEvent(KernelError):
    pass


class UnknownViewpoint(KernelError):
    pass


class DuplicateViewName(KernelError):
    pass


class ImmutablePropertyViolation(KernelError):
    pass


class UnknownTarget(KernelError):
    pass


class UnknownSlot(KernelError):
    pass


class SlotAlreadyTombstoned(KernelError):
    pass


# descriptions
class ValidationFailed(KernelError):
    """detail carries the list of violations."""


class ParseError(KernelError):
    """detail carries the 1-based token position."""

    def __init__(self, message: str, position: int):
        super().__init__(message, detail=position)
        self.position = position


class EvaluationError(KernelError):
    """A script referenced an unknown field path — never silently false."""


class NotWellFormed(KernelError):
    pass


# workflow
class UnknownAgent(KernelError):
    pass


class UnknownActivity(KernelError):
    pass


class RoleDenied(KernelError):
    pass


class IllegalTransition(KernelError):
    pass


class MissingOutcome(KernelError):
    pass


# provenance
class BeforeCreation(KernelError):
    pass


class UnknownOutcome(KernelError):
    pass


class MalformedDocument(KernelError):
    pass


# allocation
class InfeasibleOverride(KernelError):
    """detail carries the failing feasibility clause."""


class UnknownTask(KernelError):
    pass


class StaleAssignment(KernelError):
    pass


class PlanNotActive(KernelError):
    pass


# service
class AuthFailed(KernelError):
    pass
