"""Feasibility of placing one task on one resource at one start instant.

Clause order fixes the reported reason: (1) requirements predicate over the
resource's capabilities, (2) holidays, (3) daily-hours cap given existing
bookings, (4) daily working window, (5) the task's own earliest/deadline
window. Plan-context checks additionally refuse overlapping bookings
("double-booked") after the five clauses.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, time, timedelta
from typing import Iterable, Optional

from ..descriptions.scripts import ScriptContext, evaluate_script
from .model import AllocationPlan, Resource, Task

REASON_REQUIREMENTS = "requirements"
REASON_HOLIDAY = "holiday"
REASON_DAILY_CAP = "daily-hours cap"
REASON_WINDOW = "working-window"
REASON_TASK_WINDOW = "task-window"
REASON_OVERLAP = "double-booked"

Interval = tuple[datetime, datetime]


@dataclass(frozen=True)
class Feasibility:
    ok: bool
    reason: Optional[str] = None

    def __bool__(self) -> bool:
        return self.ok


def _days_touched(start: datetime, end: datetime):
    day = start.date()
    last = (end - timedelta(microseconds=1)).date() if end > start else start.date()
    while day <= last:
        yield day
        day += timedelta(days=1)


def _minutes_on_day(interval: Interval, day) -> float:
    day_start = datetime.combine(day, time(0, 0), tzinfo=interval[0].tzinfo)
    day_end = day_start + timedelta(days=1)
    lo = max(interval[0], day_start)
    hi = min(interval[1], day_end)
    return max(0.0, (hi - lo).total_seconds() / 60.0)


def feasible(
    resource: Resource,
    task: Task,
    start: datetime,
    bookings: Iterable[Interval] = (),
) -> Feasibility:
    """The five-clause check; reason is the first failing clause."""
    end = start + timedelta(minutes=task.duration_minutes)
    bookings = list(bookings)

    ctx = ScriptContext(properties=dict(resource.capabilities))
    if not evaluate_script(task.requirements, ctx):  # EvaluationError propagates
        return Feasibility(False, REASON_REQUIREMENTS)

    cal = resource.calendar
    for day in _days_touched(start, end):
        if cal.is_holiday(day):
            return Feasibility(False, REASON_HOLIDAY)

    cap = cal.max_hours_per_day * 60.0
    for day in _days_touched(start, end):
        booked = sum(_minutes_on_day(b, day) for b in bookings)
        if booked + _minutes_on_day((start, end), day) > cap + 1e-9:
            return Feasibility(False, REASON_DAILY_CAP)

    for day in _days_touched(start, end):
        day_start = datetime.combine(day, time(0, 0), tzinfo=start.tzinfo)
        lo = max(start, day_start)
        hi = min(end, day_start + timedelta(days=1))
        win_lo = datetime.combine(day, cal.window_start, tzinfo=start.tzinfo)
        win_hi = datetime.combine(day, cal.window_end, tzinfo=start.tzinfo)
        if lo < win_lo or hi > win_hi:
            return Feasibility(False, REASON_WINDOW)

    if start < task.earliest_start or end > task.deadline:
        return Feasibility(False, REASON_TASK_WINDOW)

    return Feasibility(True)


def feasible_in_plan(
    resource: Resource,
    task: Task,
    start: datetime,
    plan: AllocationPlan,
) -> Feasibility:
    """The five clauses against the plan's bookings, then overlap."""
    bookings = plan.bookings_for(resource.item_id)
    verdict = feasible(resource, task, start, bookings)
    if not verdict.ok:
        return verdict
    end = start + timedelta(minutes=task.duration_minutes)
    for lo, hi in bookings:
        if start < hi and lo < end:
            return Feasibility(False, REASON_OVERLAP)
    return Feasibility(True)
