"""Greedy allocation with provenance-derived relevance scoring.

Tasks are placed in (priority desc, deadline asc, id asc) order; candidate
starts advance on a 15-minute grid from each task's earliest start; the first
start with a feasible resource wins and the feasible resource with the
highest relevance takes it (ties to the ascending resource id). Deterministic
throughout — identical inputs produce byte-identical serialized plans.
"""

from __future__ import annotations

from datetime import datetime, timedelta
from typing import Callable, Iterable, Optional

from ..provenance.audit import completed_executions
from ..store import ItemStore
from .feasibility import REASON_TASK_WINDOW, Feasibility, feasible_in_plan
from .model import (
    AllocationPlan,
    Assignment,
    ORIGIN_ENGINE,
    Resource,
    Task,
)

GRID_MINUTES = 15

DECAY = 0.9
DECAY_PERIOD_DAYS = 30.0

# scorer(resource, task, asOf) -> float
Scorer = Callable[[Resource, Task, datetime], float]


def zero_scorer(resource: Resource, task: Task, as_of: datetime) -> float:
    return 0.0


def relevance_score(
    store: ItemStore, resource_item_id: str, task_type: str, as_of: datetime
) -> float:
    """Recency-weighted count of matching past completions: each completed
    execution of the same task type contributes 0.9^(ageInDays/30)."""
    score = 0.0
    for t_type, _item, completed_at in completed_executions(store, resource_item_id):
        if t_type != task_type or completed_at > as_of:
            continue
        age_days = (as_of - completed_at).total_seconds() / 86400.0
        score += DECAY ** (age_days / DECAY_PERIOD_DAYS)
    return score


def store_scorer(store: ItemStore) -> Scorer:
    def scorer(resource: Resource, task: Task, as_of: datetime) -> float:
        return relevance_score(store, resource.item_id, task.task_type, as_of)

    return scorer


def candidate_starts(task: Task, plan: AllocationPlan):
    duration = timedelta(minutes=task.duration_minutes)
    start = task.earliest_start
    step = timedelta(minutes=GRID_MINUTES)
    while start < plan.horizon_from:  # grid stays anchored at earliestStart
        start += step
    latest = min(task.deadline, plan.horizon_to) - duration
    while start <= latest:
        yield start
        start += step


def place_task(
    task: Task,
    resources: list[Resource],
    plan: AllocationPlan,
    scorer: Scorer,
    origin: str = ORIGIN_ENGINE,
) -> tuple[Optional[Assignment], Optional[str]]:
    """Greedy placement of one task against the committed plan.

    Returns (assignment, None) or (None, reason). The reason is the verdict
    of the first probe (first candidate start, lowest resource id) so it is
    deterministic; when no candidate start exists at all it is the task
    window itself that cannot fit.
    """
    ordered = sorted(resources, key=lambda r: r.item_id)
    first_reason: Optional[str] = None
    as_of = plan.horizon_from
    for start in candidate_starts(task, plan):
        verdicts = [(r, feasible_in_plan(r, task, start, plan)) for r in ordered]
        if first_reason is None and verdicts:
            first_reason = verdicts[0][1].reason or REASON_TASK_WINDOW
        feasible_here = [r for r, v in verdicts if v.ok]
        if not feasible_here:
            continue
        # feasible_here is in ascending item_id order, so the first maximum
        # wins ties by ascending resource id
        scores = [scorer(r, task, as_of) for r in feasible_here]
        best = feasible_here[scores.index(max(scores))]
        end = start + timedelta(minutes=task.duration_minutes)
        return Assignment(task.id, best.item_id, start, end, origin), None
    return None, first_reason or "no-feasible-slot"


def allocate(
    tasks: Iterable[Task],
    resources: Iterable[Resource],
    horizon_from: datetime,
    horizon_to: datetime,
    scorer: Scorer = zero_scorer,
) -> AllocationPlan:
    plan = AllocationPlan(horizon_from, horizon_to)
    ordered = sorted(tasks, key=lambda t: (-t.priority, t.deadline, t.id))
    resources = list(resources)
    for task in ordered:
        assignment, reason = place_task(task, resources, plan, scorer)
        if assignment is not None:
            plan.assignments.append(assignment)
        else:
            plan.unassigned.append((task.id, reason or "no-feasible-slot"))
    return plan


def allocate_with_procedures(
    tasks: list[Task],
    resources: list[Resource],
    procedures,
    horizon_from: datetime,
    horizon_to: datetime,
    scorer: Scorer = zero_scorer,
) -> AllocationPlan:
    """Like allocate, honoring procedure sequencing: a task chained behind a
    predecessor becomes eligible only once the predecessor is placed, with
    its earliest start pushed to the predecessor's planned end."""
    by_id = {t.id: t for t in tasks}
    predecessor: dict[str, str] = {}
    for proc in procedures:
        for prev, nxt in zip(proc.task_ids, proc.task_ids[1:]):
            predecessor[nxt] = prev

    plan = AllocationPlan(horizon_from, horizon_to)
    pending = dict(by_id)
    while pending:
        eligible = []
        for t in pending.values():
            pred = predecessor.get(t.id)
            if pred is None or pred not in pending:
                eligible.append(t)
        if not eligible:
            break
        progressed = False
        for task in sorted(eligible, key=lambda t: (-t.priority, t.deadline, t.id)):
            pred = predecessor.get(task.id)
            if pred is not None:
                prev_assignment = plan.assignment_for(pred)
                if prev_assignment is None:
                    plan.unassigned.append((task.id, f"predecessor-unassigned:{pred}"))
                    del pending[task.id]
                    progressed = True
                    continue
                if prev_assignment.end > task.earliest_start:
                    task = Task(
                        id=task.id,
                        task_type=task.task_type,
                        requirements=task.requirements,
                        duration_minutes=task.duration_minutes,
                        earliest_start=prev_assignment.end,
                        deadline=task.deadline,
                        priority=task.priority,
                    )
            assignment, reason = place_task(task, resources, plan, scorer)
            if assignment is not None:
                plan.assignments.append(assignment)
            else:
                plan.unassigned.append((task.id, reason or "no-feasible-slot"))
            del pending[task.id]
            progressed = True
        if not progressed:  # defensive; cyclic procedure refs cannot occur in lists
            for t in pending.values():
                plan.unassigned.append((t.id, "predecessor-cycle"))
            break
    return plan
