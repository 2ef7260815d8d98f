"""Resource-allocation domain: resources with calendars, typed tasks with
requirement predicates, procedures, scored assignments, and repair rules.

Plan and input documents serialize as XML with attribute-carrying elements —
these are the documents the console and CLI render.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta
from typing import Optional

from .. import errors
from ..lifecycle import Transition
from ..timeutil import format_instant, parse_instant

CATEGORIES = ("Machine", "Operator", "Administrator")

ORIGIN_ENGINE = "Engine"
ORIGIN_PLANNER = "Planner"
ORIGIN_RULE = "Rule"


@dataclass
class Calendar:
    holidays: list[tuple[date, date]] = field(default_factory=list)  # inclusive ranges
    max_hours_per_day: float = 24.0
    window_start: time = time(0, 0)
    window_end: time = time(23, 59, 59)

    def is_holiday(self, day: date) -> bool:
        return any(lo <= day <= hi for lo, hi in self.holidays)


@dataclass
class Resource:
    item_id: str
    name: str
    category: str
    capabilities: dict[str, str] = field(default_factory=dict)
    calendar: Calendar = field(default_factory=Calendar)


@dataclass
class Task:
    id: str
    task_type: str
    requirements: str  # script predicate over prop: capability paths
    duration_minutes: int
    earliest_start: datetime
    deadline: datetime
    priority: int = 0

    def schedulable(self) -> bool:
        return self.earliest_start + timedelta(minutes=self.duration_minutes) <= self.deadline


@dataclass
class Procedure:
    id: str
    name: str
    task_ids: list[str] = field(default_factory=list)  # strict sequence


@dataclass(frozen=True)
class Assignment:
    task_id: str
    resource_item_id: str
    start: datetime
    end: datetime
    origin: str = ORIGIN_ENGINE


@dataclass
class AllocationPlan:
    horizon_from: datetime
    horizon_to: datetime
    assignments: list[Assignment] = field(default_factory=list)
    unassigned: list[tuple[str, str]] = field(default_factory=list)  # (taskId, reason)

    def assignment_for(self, task_id: str) -> Optional[Assignment]:
        return next((a for a in self.assignments if a.task_id == task_id), None)

    def bookings_for(self, resource_item_id: str) -> list[tuple[datetime, datetime]]:
        return [
            (a.start, a.end)
            for a in self.assignments
            if a.resource_item_id == resource_item_id
        ]

    def without_task(self, task_id: str) -> "AllocationPlan":
        return AllocationPlan(
            self.horizon_from,
            self.horizon_to,
            [a for a in self.assignments if a.task_id != task_id],
            [u for u in self.unassigned if u[0] != task_id],
        )


@dataclass
class Rule:
    name: str
    trigger_transition: Transition
    trigger_task_type: Optional[str]
    condition: str  # script source
    action: str  # "Reallocate" | "Unassign" | "Escalate"
    action_arg: str  # taskId for (Re|Un)assign, role for Escalate
    order: int = 0


# -- XML: plan document ------------------------------------------------------------


def plan_to_xml(plan: AllocationPlan) -> str:
    root = ET.Element(
        "allocationPlan",
        {"from": format_instant(plan.horizon_from), "to": format_instant(plan.horizon_to)},
    )
    for a in sorted(plan.assignments, key=lambda a: a.task_id):
        ET.SubElement(
            root,
            "assignment",
            {
                "task": a.task_id,
                "resource": a.resource_item_id,
                "start": format_instant(a.start),
                "end": format_instant(a.end),
                "origin": a.origin,
            },
        )
    for task_id, reason in sorted(plan.unassigned):
        ET.SubElement(root, "unassigned", {"task": task_id, "reason": reason})
    return ET.tostring(root, encoding="unicode")


def plan_from_xml(document: str) -> AllocationPlan:
    try:
        root = ET.fromstring(document)
    except ET.ParseError as exc:
        raise errors.MalformedDocument(str(exc)) from exc
    if root.tag != "allocationPlan":
        raise errors.MalformedDocument(f"expected allocationPlan, got {root.tag}")
    plan = AllocationPlan(
        horizon_from=parse_instant(root.get("from", "")),
        horizon_to=parse_instant(root.get("to", "")),
    )
    for el in root.findall("assignment"):
        plan.assignments.append(
            Assignment(
                task_id=el.get("task", ""),
                resource_item_id=el.get("resource", ""),
                start=parse_instant(el.get("start", "")),
                end=parse_instant(el.get("end", "")),
                origin=el.get("origin", ORIGIN_ENGINE),
            )
        )
    for el in root.findall("unassigned"):
        plan.unassigned.append((el.get("task", ""), el.get("reason", "")))
    return plan


# -- XML: allocation inputs (tasks, resources, procedures) ---------------------------


def _time_str(t: time) -> str:
    return t.strftime("%H:%M:%S") if t.second else t.strftime("%H:%M")


def _parse_time(s: str) -> time:
    parts = [int(p) for p in s.split(":")]
    while len(parts) < 3:
        parts.append(0)
    return time(*parts[:3])


def inputs_to_xml(
    tasks: list[Task], resources: list[Resource], procedures: list[Procedure] = ()
) -> str:
    root = ET.Element("allocationInput")
    for t in sorted(tasks, key=lambda t: t.id):
        ET.SubElement(
            root,
            "task",
            {
                "id": t.id,
                "type": t.task_type,
                "requirements": t.requirements,
                "duration": str(t.duration_minutes),
                "earliestStart": format_instant(t.earliest_start),
                "deadline": format_instant(t.deadline),
                "priority": str(t.priority),
            },
        )
    for r in sorted(resources, key=lambda r: r.item_id):
        res_el = ET.SubElement(
            root,
            "resource",
            {
                "itemId": r.item_id,
                "name": r.name,
                "category": r.category,
                "maxHoursPerDay": str(r.calendar.max_hours_per_day),
                "windowStart": _time_str(r.calendar.window_start),
                "windowEnd": _time_str(r.calendar.window_end),
            },
        )
        for name in sorted(r.capabilities):
            ET.SubElement(res_el, "capability", {"name": name, "value": r.capabilities[name]})
        for lo, hi in r.calendar.holidays:
            ET.SubElement(res_el, "holiday", {"from": lo.isoformat(), "to": hi.isoformat()})
    for p in sorted(procedures, key=lambda p: p.id):
        proc_el = ET.SubElement(root, "procedure", {"id": p.id, "name": p.name})
        for tid in p.task_ids:
            ET.SubElement(proc_el, "taskRef", {"id": tid})
    return ET.tostring(root, encoding="unicode")


def inputs_from_xml(document: str) -> tuple[list[Task], list[Resource], list[Procedure]]:
    try:
        root = ET.fromstring(document)
    except ET.ParseError as exc:
        raise errors.MalformedDocument(str(exc)) from exc
    if root.tag != "allocationInput":
        raise errors.MalformedDocument(f"expected allocationInput, got {root.tag}")
    tasks = [
        Task(
            id=el.get("id", ""),
            task_type=el.get("type", ""),
            requirements=el.get("requirements", "true"),
            duration_minutes=int(el.get("duration", "0")),
            earliest_start=parse_instant(el.get("earliestStart", "")),
            deadline=parse_instant(el.get("deadline", "")),
            priority=int(el.get("priority", "0")),
        )
        for el in root.findall("task")
    ]
    resources = []
    for el in root.findall("resource"):
        calendar = Calendar(
            holidays=[
                (date.fromisoformat(h.get("from", "")), date.fromisoformat(h.get("to", "")))
                for h in el.findall("holiday")
            ],
            max_hours_per_day=float(el.get("maxHoursPerDay", "24")),
            window_start=_parse_time(el.get("windowStart", "00:00")),
            window_end=_parse_time(el.get("windowEnd", "23:59:59")),
        )
        resources.append(
            Resource(
                item_id=el.get("itemId", ""),
                name=el.get("name", ""),
                category=el.get("category", "Operator"),
                capabilities={
                    c.get("name", ""): c.get("value", "") for c in el.findall("capability")
                },
                calendar=calendar,
            )
        )
    procedures = [
        Procedure(
            id=el.get("id", ""),
            name=el.get("name", ""),
            task_ids=[t.get("id", "") for t in el.findall("taskRef")],
        )
        for el in root.findall("procedure")
    ]
    return tasks, resources, procedures


def plan_to_dict(plan: AllocationPlan) -> dict:
    return {
        "horizon": {
            "from": format_instant(plan.horizon_from),
            "to": format_instant(plan.horizon_to),
        },
        "assignments": [
            {
                "task": a.task_id,
                "resource": a.resource_item_id,
                "start": format_instant(a.start),
                "end": format_instant(a.end),
                "origin": a.origin,
            }
            for a in sorted(plan.assignments, key=lambda a: a.task_id)
        ],
        "unassigned": [
            {"task": t, "reason": r} for t, r in sorted(plan.unassigned)
        ],
    }
