from ..lifecycle import ActivityState, Transition, is_legal, legal_transitions
from .engine import ADMIN_ROLE, Job, Span, Token, WorkflowEngine, WorkflowRuntime

__all__ = [
    "ADMIN_ROLE",
    "ActivityState",
    "Job",
    "Span",
    "Token",
    "Transition",
    "WorkflowEngine",
    "WorkflowRuntime",
    "is_legal",
    "legal_transitions",
]
