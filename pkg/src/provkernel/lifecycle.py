"""Activity lifecycle states, event transitions, and the legality table.

Kept dependency-free: both the store (events carry states) and the workflow
engine (which enforces legality) import from here.
"""

from __future__ import annotations

from enum import Enum


class ActivityState(str, Enum):
    WAITING = "Waiting"
    ACTIVE = "Active"
    STARTED = "Started"
    COMPLETED = "Completed"
    SUSPENDED = "Suspended"
    ABORTED = "Aborted"


class Transition(str, Enum):
    CREATE = "Create"
    START = "Start"
    COMPLETE = "Complete"
    SUSPEND = "Suspend"
    RESUME = "Resume"
    ABORT = "Abort"
    PROPERTY_SET = "PropertySet"
    COLLECTION_CHANGE = "CollectionChange"


LIFECYCLE_TRANSITIONS = (
    Transition.START,
    Transition.COMPLETE,
    Transition.SUSPEND,
    Transition.RESUME,
    Transition.ABORT,
)

# Transition -> set of states it is legal from. Resume's target is the
# pre-suspension state, every other target is fixed.
_LEGAL_FROM = {
    Transition.START: {ActivityState.ACTIVE},
    Transition.COMPLETE: {ActivityState.STARTED},
    Transition.SUSPEND: {ActivityState.ACTIVE, ActivityState.STARTED},
    Transition.RESUME: {ActivityState.SUSPENDED},
    Transition.ABORT: {ActivityState.ACTIVE, ActivityState.STARTED, ActivityState.SUSPENDED},
}

_FIXED_TARGET = {
    Transition.START: ActivityState.STARTED,
    Transition.COMPLETE: ActivityState.COMPLETED,
    Transition.SUSPEND: ActivityState.SUSPENDED,
    Transition.ABORT: ActivityState.ABORTED,
}


def is_legal(transition: Transition, state: ActivityState) -> bool:
    allowed = _LEGAL_FROM.get(transition)
    return allowed is not None and state in allowed


def target_state(transition: Transition, state: ActivityState,
                 pre_suspension: ActivityState | None = None) -> ActivityState:
    """State after applying a legal lifecycle transition."""
    if transition is Transition.RESUME:
        if pre_suspension is None:
            raise ValueError("Resume requires the pre-suspension state")
        return pre_suspension
    return _FIXED_TARGET[transition]


def legal_transitions(state: ActivityState) -> list[Transition]:
    return [t for t in LIFECYCLE_TRANSITIONS if is_legal(t, state)]
