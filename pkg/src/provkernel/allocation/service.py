"""Plans as Items: every engine, planner, and rule decision is one event.

A plan item carries its inputs (tasks/resources/procedures) as one outcome,
then one "plan" event per mutation whose outcome is the full plan document
and whose note is the origin (Engine, Planner, Rule). Replaying the item's
log therefore reconstructs the final plan. Orchestration turns an activated
plan into executable procedure items and feeds their workflow events back to
the rule manager.
"""

from __future__ import annotations

import threading
from datetime import datetime
from typing import Iterable, Optional

from .. import errors
from ..descriptions import (
    ActivityDescription,
    DescriptionRegistry,
    KIND_WORKFLOW,
    WorkflowDescription,
    WorkflowEdge,
    WorkflowNode,
)
from ..descriptions.scripts import ScriptContext, evaluate_script
from ..lifecycle import Transition
from ..provenance.audit import task_type_of
from ..store import Event, EventDraft, ItemStore, OutcomeRef, Property
from ..workflow import ADMIN_ROLE, WorkflowEngine
from .engine import Scorer, allocate_with_procedures, place_task, store_scorer
from .feasibility import feasible_in_plan
from .model import (
    AllocationPlan,
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
    plan_to_xml,
)

META_PLAN = "allocationPlan"
META_INPUT = "allocationInput"

PLAN_PATH = "plan"
INPUTS_PATH = "inputs"

STATUS_DRAFT = "Draft"
STATUS_ACTIVE = "Active"


class AllocationService:
    def __init__(
        self,
        store: ItemStore,
        registry: DescriptionRegistry,
        engine: WorkflowEngine,
        system_agent: str,
    ):
        self.store = store
        self.registry = registry
        self.engine = engine
        self.system_agent = system_agent
        self.scorer: Scorer = store_scorer(store)
        self._rules: dict[str, list[Rule]] = {}  # plan item -> rules
        self._managed: dict[str, str] = {}  # procedure item -> plan item
        self.notifications: list[dict] = []
        self._lock = threading.Lock()
        engine.add_listener(self._on_workflow_event)

    # -- resource items ------------------------------------------------------

    def ensure_resource_item(self, resource: Resource, agent: str | None = None) -> Resource:
        if resource.item_id and self.store.exists(resource.item_id):
            return resource
        found = self.store.query_items([("Type", "Resource"), ("Name", resource.name)])
        if found:
            resource.item_id = found[0]
            return resource
        props = [
            Property("Name", resource.name, mutable=False),
            Property("Type", "Resource", mutable=False),
            Property("Category", resource.category, mutable=False),
        ]
        if resource.category in ("Operator", "Administrator"):
            props.append(Property("Roles", resource.category.lower()))
        props.extend(
            Property(name, value) for name, value in sorted(resource.capabilities.items())
        )
        resource.item_id = self.store.create_item(
            initial_properties=props, agent=agent or self.system_agent
        )
        return resource

    # -- plan persistence -------------------------------------------------------

    def _append_with_outcome(
        self, item_id: str, path: str, schema: str, document: str, note: str,
        agent: str, data: Optional[dict] = None,
    ) -> Event:
        version = self.store.version(item_id)
        ev = self.store.append_event(
            item_id,
            EventDraft(
                agent=agent,
                activity_path=path,
                transition=Transition.COMPLETE,
                outcome_ref=OutcomeRef(schema, 1, version + 1),
                note=note,
                data=data,
            ),
            expected_version=version,
        )
        self.store.attach_outcome(item_id, ev.seq, document)
        return ev

    def create_plan(
        self,
        tasks: list[Task],
        resources: list[Resource],
        horizon_from: datetime,
        horizon_to: datetime,
        procedures: Iterable[Procedure] = (),
        agent: str | None = None,
    ) -> tuple[str, AllocationPlan]:
        agent = agent or self.system_agent
        resources = [self.ensure_resource_item(r, agent) for r in resources]
        procedures = list(procedures)
        plan = allocate_with_procedures(
            tasks, resources, procedures, horizon_from, horizon_to, self.scorer
        )
        plan_item = self.store.create_item(
            initial_properties=[
                Property("Name", f"plan-{horizon_from.date().isoformat()}", mutable=False),
                Property("Type", "AllocationPlan", mutable=False),
                Property("Status", STATUS_DRAFT),
            ],
            agent=agent,
        )
        self._append_with_outcome(
            plan_item, INPUTS_PATH, META_INPUT,
            inputs_to_xml(tasks, resources, procedures), "inputs", agent,
        )
        self._append_with_outcome(
            plan_item, PLAN_PATH, META_PLAN, plan_to_xml(plan), ORIGIN_ENGINE, agent,
        )
        return plan_item, plan

    def load_plan(self, plan_item_id: str) -> AllocationPlan:
        seq = self._latest(plan_item_id, META_PLAN)
        return plan_from_xml(self.store.get_outcome(plan_item_id, seq).document)

    def load_inputs(self, plan_item_id: str) -> tuple[list[Task], list[Resource], list[Procedure]]:
        seq = self._latest(plan_item_id, META_INPUT)
        return inputs_from_xml(self.store.get_outcome(plan_item_id, seq).document)

    def _latest(self, plan_item_id: str, schema: str) -> int:
        try:
            return self.store.resolve_viewpoint(plan_item_id, schema, "last")
        except errors.UnknownViewpoint as exc:
            raise errors.UnknownItem(f"{plan_item_id} is not a plan item") from exc

    # -- planner operations --------------------------------------------------------

    def activate(self, plan_item_id: str, agent: str | None = None) -> None:
        self.store.set_property(
            plan_item_id, "Status", STATUS_ACTIVE,
            expected_version=self.store.version(plan_item_id),
            agent=agent or self.system_agent,
        )

    def override(
        self,
        plan_item_id: str,
        task_id: str,
        resource_item_id: str,
        start: datetime,
        agent: str | None = None,
    ) -> AllocationPlan:
        """Manual planner decision; feasibility-checked, provenance-recorded."""
        agent = agent or self.system_agent
        plan = self.load_plan(plan_item_id)
        tasks, resources, _ = self.load_inputs(plan_item_id)
        task = next((t for t in tasks if t.id == task_id), None)
        if task is None:
            raise errors.UnknownTask(task_id)
        resource = next((r for r in resources if r.item_id == resource_item_id), None)
        if resource is None:
            raise errors.UnknownItem(f"resource {resource_item_id} not part of this plan")

        remaining = plan.without_task(task_id)
        verdict = feasible_in_plan(resource, task, start, remaining)
        if not verdict.ok:
            raise errors.InfeasibleOverride(verdict.reason or "infeasible", detail=verdict.reason)
        from datetime import timedelta

        from .model import Assignment

        remaining.assignments.append(
            Assignment(
                task_id,
                resource_item_id,
                start,
                start + timedelta(minutes=task.duration_minutes),
                ORIGIN_PLANNER,
            )
        )
        self._append_with_outcome(
            plan_item_id, PLAN_PATH, META_PLAN, plan_to_xml(remaining), ORIGIN_PLANNER,
            agent, data={"task": task_id, "resource": resource_item_id},
        )
        return remaining

    # -- rule manager -----------------------------------------------------------------

    def set_rules(self, plan_item_id: str, rules: Iterable[Rule]) -> None:
        ordered = sorted(rules, key=lambda r: r.order)
        orders = [r.order for r in ordered]
        if len(set(orders)) != len(orders):
            raise ValueError("rule orders must be unique")
        self._rules[plan_item_id] = ordered

    def apply_rules(
        self,
        plan_item_id: str,
        event: Event,
        event_item_id: str,
        rules: Iterable[Rule] | None = None,
        agent: str | None = None,
    ) -> AllocationPlan:
        """Single-pass rule evaluation in ascending order; each applied
        action is one provenance-recorded plan mutation."""
        agent = agent or self.system_agent
        rules = sorted(
            self._rules.get(plan_item_id, []) if rules is None else rules,
            key=lambda r: r.order,
        )
        plan = self.load_plan(plan_item_id)
        tasks, resources, _ = self.load_inputs(plan_item_id)
        task_by_id = {t.id: t for t in tasks}
        event_type = task_type_of(self.store, event_item_id, event.activity_path)

        for rule in rules:
            if rule.trigger_transition is not event.transition:
                continue
            if rule.trigger_task_type and rule.trigger_task_type != event_type:
                continue
            outcome_xml = None
            if event.outcome_ref is not None and self.store.has_outcome(event_item_id, event.seq):
                outcome_xml = self.store.get_outcome(event_item_id, event.seq).document
            props = {
                p.name: p.value
                for p in self.store.snapshot(event_item_id).properties.values()
            }
            try:
                if not evaluate_script(rule.condition, ScriptContext.from_xml(props, outcome_xml)):
                    continue
            except errors.EvaluationError as exc:
                self._escalate(plan_item_id, rule.name, ADMIN_ROLE, str(exc), agent)
                continue

            if rule.action == "Reallocate":
                task = task_by_id.get(rule.action_arg)
                if task is None:
                    continue
                stripped = plan.without_task(task.id)
                assignment, reason = place_task(
                    task, resources, stripped, self.scorer, origin=ORIGIN_RULE
                )
                if assignment is not None:
                    stripped.assignments.append(assignment)
                else:
                    stripped.unassigned.append((task.id, reason or "no-feasible-slot"))
                plan = stripped
                self._record_rule_mutation(plan_item_id, plan, rule, agent)
            elif rule.action == "Unassign":
                if rule.action_arg not in task_by_id:
                    continue
                plan = plan.without_task(rule.action_arg)
                plan.unassigned.append((rule.action_arg, f"rule:{rule.name}"))
                self._record_rule_mutation(plan_item_id, plan, rule, agent)
            elif rule.action == "Escalate":
                self._escalate(plan_item_id, rule.name, rule.action_arg, "rule escalation", agent)
        return plan

    def _record_rule_mutation(self, plan_item_id: str, plan: AllocationPlan,
                              rule: Rule, agent: str) -> None:
        self._append_with_outcome(
            plan_item_id, PLAN_PATH, META_PLAN, plan_to_xml(plan), ORIGIN_RULE,
            agent, data={"rule": rule.name},
        )

    def _escalate(self, plan_item_id: str, rule_name: str, role: str,
                  message: str, agent: str) -> None:
        version = self.store.version(plan_item_id)
        self.store.append_event(
            plan_item_id,
            EventDraft(
                agent=agent,
                activity_path="escalation",
                transition=Transition.PROPERTY_SET,
                note=f"escalate:{role}",
                data={"name": f"Escalation:{rule_name}", "value": role, "mutable": True},
            ),
            expected_version=version,
        )

    def escalation_jobs(self, roles: Iterable[str]) -> list[dict]:
        """Escalations surface as job entries for agents holding the role."""
        roles = set(roles)
        jobs = []
        for plan_item in self.store.query_items([("Type", "AllocationPlan")]):
            snap = self.store.snapshot(plan_item)
            for name, prop in sorted(snap.properties.items()):
                if name.startswith("Escalation:") and prop.value in roles:
                    jobs.append(
                        {
                            "itemId": plan_item,
                            "activityPath": f"escalation:{name.split(':', 1)[1]}",
                            "transition": "Escalate",
                            "requiredRole": prop.value,
                        }
                    )
        return jobs

    # -- orchestration -------------------------------------------------------------------

    def orchestrate(self, plan_item_id: str, agent: str | None = None) -> list[str]:
        """Instantiate one workflow item per procedure of an activated plan,
        activities role-bound to the assigned resources."""
        agent = agent or self.system_agent
        snap = self.store.snapshot(plan_item_id)
        if snap.property_value("Status") != STATUS_ACTIVE:
            raise errors.PlanNotActive(f"plan {plan_item_id} must be activated by the planner")
        plan = self.load_plan(plan_item_id)
        tasks, resources, procedures = self.load_inputs(plan_item_id)
        task_by_id = {t.id: t for t in tasks}
        resource_ids = {r.item_id for r in resources}

        created: list[str] = []
        for proc in procedures:
            nodes = [WorkflowNode("start", "Start")]
            edges = []
            prev = "start"
            item_props: list[Property] = []
            for tid in proc.task_ids:
                task = task_by_id.get(tid)
                if task is None:
                    raise errors.UnknownTask(tid)
                assignment = plan.assignment_for(tid)
                if assignment is not None:
                    if assignment.resource_item_id not in resource_ids or not self.store.exists(
                        assignment.resource_item_id
                    ):
                        raise errors.StaleAssignment(assignment.resource_item_id)
                    role = f"resource:{assignment.resource_item_id}"
                    item_props.append(
                        Property(f"AssignedResource:{tid}", assignment.resource_item_id)
                    )
                    from ..timeutil import format_instant

                    item_props.append(
                        Property(f"PlannedStart:{tid}", format_instant(assignment.start))
                    )
                else:
                    role = ADMIN_ROLE
                item_props.append(Property(f"TaskType:{tid}", task.task_type))
                nodes.append(
                    WorkflowNode(tid, "Activity", ActivityDescription(tid, role))
                )
                edges.append(WorkflowEdge(prev, tid, 0))
                prev = tid
            nodes.append(WorkflowNode("end", "End"))
            edges.append(WorkflowEdge(prev, "end", 0))

            wf_name = f"procedure-{proc.id}"
            _, version = self.registry.store_description(
                KIND_WORKFLOW, wf_name, WorkflowDescription(wf_name, 0, nodes, edges), agent
            )
            item_id = self.registry.instantiate(
                wf_name, version, proc.name, item_props, agent=agent, item_type="Procedure"
            )
            with self._lock:
                self._managed[item_id] = plan_item_id
            created.append(item_id)
        return created

    def _on_workflow_event(self, item_id: str, event: Event) -> None:
        with self._lock:
            plan_item = self._managed.get(item_id)
        if plan_item is None:
            return
        self.notifications.append(
            {
                "planItem": plan_item,
                "itemId": item_id,
                "seq": event.seq,
                "activityPath": event.activity_path,
                "transition": event.transition.value,
            }
        )
        self.apply_rules(plan_item, event, item_id)
