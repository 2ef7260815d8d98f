from .engine import (
    GRID_MINUTES,
    allocate,
    allocate_with_procedures,
    candidate_starts,
    place_task,
    relevance_score,
    store_scorer,
    zero_scorer,
)
from .feasibility import (
    Feasibility,
    REASON_DAILY_CAP,
    REASON_HOLIDAY,
    REASON_OVERLAP,
    REASON_REQUIREMENTS,
    REASON_TASK_WINDOW,
    REASON_WINDOW,
    feasible,
    feasible_in_plan,
)
from .model import (
    AllocationPlan,
    Assignment,
    Calendar,
    ORIGIN_ENGINE,
    ORIGIN_PLANNER,
    ORIGIN_RULE,
    Procedure,
    Resource,
    Rule,
    Task,
    inputs_from_xml,
    inputs_to_xml,
    plan_from_xml,
    plan_to_dict,
    plan_to_xml,
)
from .service import AllocationService, STATUS_ACTIVE, STATUS_DRAFT

__all__ = [
    "AllocationPlan",
    "AllocationService",
    "Assignment",
    "Calendar",
    "Feasibility",
    "GRID_MINUTES",
    "ORIGIN_ENGINE",
    "ORIGIN_PLANNER",
    "ORIGIN_RULE",
    "Procedure",
    "REASON_DAILY_CAP",
    "REASON_HOLIDAY",
    "REASON_OVERLAP",
    "REASON_REQUIREMENTS",
    "REASON_TASK_WINDOW",
    "REASON_WINDOW",
    "Resource",
    "Rule",
    "STATUS_ACTIVE",
    "STATUS_DRAFT",
    "Task",
    "allocate",
    "allocate_with_procedures",
    "candidate_starts",
    "feasible",
    "feasible_in_plan",
    "inputs_from_xml",
    "inputs_to_xml",
    "place_task",
    "plan_from_xml",
    "plan_to_dict",
    "plan_to_xml",
    "relevance_score",
    "store_scorer",
    "zero_scorer",
]
