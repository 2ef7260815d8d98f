"""Workflow execution over pinned descriptions.

Activation (Waiting -> Active) is not an event kind, so it is derived: the
runtime replays the item's event log through a deterministic token simulation
of the pinned workflow graph. The same fold is used incrementally (cached
runtime) and from scratch (replay) — the two are equal by construction and
the tests assert it.

Token semantics: a completed activity emits a token per out-edge; AndSplit
copies to every out-edge; XorSplit evaluates guards in ascending edge order
and takes the first true one, else the default; AndJoin consumes one token
per in-edge of equal iteration then emits one; XorJoin forwards anything;
End retires; a back-edge increments the token's iteration and re-activates
the target. Guard evaluation failure routes nowhere: the token sticks at the
XorSplit, the item is flagged, and an administrator job is offered.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Optional

from .. import errors
from ..descriptions.registry import KIND_WORKFLOW, DescriptionRegistry
from ..descriptions.scripts import ScriptContext, evaluate_script
from ..descriptions.workflowdef import WorkflowDescription
from ..lifecycle import (
    ActivityState,
    Transition,
    is_legal,
    legal_transitions,
    target_state,
)
from ..store import Event, EventDraft, ItemStore, OutcomeRef

ADMIN_ROLE = "administrator"


@dataclass(frozen=True)
class Job:
    item_id: str
    activity_path: str
    transition: Transition
    required_role: str

    def sort_key(self):
        return (self.item_id, self.activity_path, self.transition.value)


@dataclass
class Token:
    position: str
    iteration: int
    via_edge: Optional[tuple[str, str]] = None


@dataclass
class Span:
    """One Start..terminal run of an activity; the unit OPM maps to a Process."""

    path: str
    iteration: int
    start_seq: int
    start_agent: str
    agents: list[str] = field(default_factory=list)
    end_seq: Optional[int] = None
    end_transition: Optional[Transition] = None
    reads: list[dict] = field(default_factory=list)


class WorkflowRuntime:
    """Replayable execution state of one workflow item."""

    def __init__(self, item_id: str, workflow: WorkflowDescription,
                 pins: dict[str, tuple[str, int]], guard_source):
        self.item_id = item_id
        self.workflow = workflow
        self.pins = pins
        self._guard_source = guard_source  # (name, version) -> script source
        self.version = -1
        self.states: dict[str, ActivityState] = {
            n.node_id: ActivityState.WAITING for n in workflow.nodes if n.kind == "Activity"
        }
        self.pre_suspension: dict[str, ActivityState] = {}
        self.iterations: dict[str, int] = {n.node_id: 0 for n in workflow.nodes}
        self.tokens: list[Token] = []
        self.guard_errors: dict[str, str] = {}
        self.properties: dict[str, str] = {}
        # (path, iteration) -> (path, iteration) of the process that triggered it
        self.triggered_by: dict[tuple[str, int], tuple[str, int]] = {}
        self.spans: list[Span] = []
        self.start_emitted = 0
        self.retired = 0
        self.activations_at: dict[int, list[str]] = {}
        self._newly_active: list[str] = []
        self._back_edges = self._compute_back_edges()

    # -- graph helpers -----------------------------------------------------

    def _compute_back_edges(self) -> set[tuple[str, str]]:
        # (u, v) is a back-edge iff v can already reach u
        reach: dict[str, set[str]] = {}

        def reachable_from(v: str) -> set[str]:
            if v in reach:
                return reach[v]
            seen = {v}
            stack = [v]
            while stack:
                for e in self.workflow.out_edges(stack.pop()):
                    if e.to_id not in seen:
                        seen.add(e.to_id)
                        stack.append(e.to_id)
            reach[v] = seen
            return seen

        return {
            (e.from_id, e.to_id)
            for e in self.workflow.edges
            if e.from_id in reachable_from(e.to_id)
        }

    def node_kind(self, node_id: str) -> str:
        node = self.workflow.node(node_id)
        return node.kind if node else ""

    # -- token routing ------------------------------------------------------

    def initialize(self) -> None:
        start = self.workflow.start_node()
        if start is None:
            return
        self.version = 0
        for edge in self.workflow.out_edges(start.node_id):
            self.start_emitted += 1
            self._send(Token(start.node_id, 0), edge, origin=None, ctx=self._ctx(None))
        self.activations_at[0] = list(self._newly_active)
        self._newly_active = []

    def _ctx(self, outcome_xml: Optional[str]) -> ScriptContext:
        return ScriptContext.from_xml(dict(self.properties), outcome_xml)

    def _send(self, token: Token, edge, origin, ctx: ScriptContext) -> None:
        iteration = token.iteration
        if (edge.from_id, edge.to_id) in self._back_edges:
            iteration += 1
        self._arrive(Token(edge.to_id, iteration, (edge.from_id, edge.to_id)), origin, ctx)

    def _arrive(self, token: Token, origin, ctx: ScriptContext) -> None:
        node = self.workflow.node(token.position)
        if node is None:
            return
        self.iterations[node.node_id] = max(
            self.iterations.get(node.node_id, 0), token.iteration
        )
        kind = node.kind
        if kind == "Activity":
            self.tokens.append(token)
            state = self.states.get(node.node_id)
            if state in (ActivityState.WAITING, ActivityState.COMPLETED, ActivityState.ABORTED):
                self.states[node.node_id] = ActivityState.ACTIVE
                self._newly_active.append(node.node_id)
                if origin is not None:
                    self.triggered_by[(node.node_id, token.iteration)] = origin
        elif kind == "AndSplit":
            for edge in self.workflow.out_edges(node.node_id):
                self._send(Token(node.node_id, token.iteration), edge, origin, ctx)
        elif kind == "XorSplit":
            self._route_xor(node.node_id, token, origin, ctx)
        elif kind == "AndJoin":
            self.tokens.append(token)
            self._try_fire_join(node.node_id, token.iteration, origin, ctx)
        elif kind == "XorJoin":
            for edge in self.workflow.out_edges(node.node_id):
                self._send(Token(node.node_id, token.iteration), edge, origin, ctx)
        elif kind == "End":
            self.retired += 1
        elif kind == "Start":
            for edge in self.workflow.out_edges(node.node_id):
                self._send(Token(node.node_id, token.iteration), edge, origin, ctx)

    def _route_xor(self, node_id: str, token: Token, origin, ctx: ScriptContext) -> None:
        edges = self.workflow.out_edges(node_id)
        default = next((e for e in edges if e.guard is None), None)
        try:
            for edge in edges:
                if edge.guard is None:
                    continue
                source = self._guard_source(*edge.guard)
                if evaluate_script(source, ctx):
                    self._send(Token(node_id, token.iteration), edge, origin, ctx)
                    return
            if default is not None:
                self._send(Token(node_id, token.iteration), default, origin, ctx)
        except errors.EvaluationError as exc:
            # no route taken: flag the item and leave the token stuck here
            self.guard_errors[node_id] = str(exc)
            self.tokens.append(token)

    def _try_fire_join(self, node_id: str, iteration: int, origin, ctx: ScriptContext) -> None:
        in_edges = self.workflow.in_edges(node_id)
        held: dict[tuple[str, str], Token] = {}
        for t in self.tokens:
            if t.position == node_id and t.iteration == iteration and t.via_edge is not None:
                held.setdefault(t.via_edge, t)
        if len(held) < len(in_edges):
            return
        if any((e.from_id, e.to_id) not in held for e in in_edges):
            return
        for t in held.values():
            self.tokens.remove(t)
        for edge in self.workflow.out_edges(node_id):
            self._send(Token(node_id, iteration), edge, origin, ctx)

    # -- event fold ---------------------------------------------------------

    def apply(self, ev: Event, outcome_xml: Optional[str]) -> None:
        self.version = ev.seq
        self._newly_active = []
        t = ev.transition
        path = ev.activity_path
        if t is Transition.PROPERTY_SET and ev.data:
            self.properties[ev.data["name"]] = ev.data["value"]
        elif t is Transition.START and path in self.states:
            self.states[path] = ActivityState.STARTED
            span = Span(
                path=path,
                iteration=self.iterations.get(path, 0),
                start_seq=ev.seq,
                start_agent=ev.agent,
                reads=(ev.data or {}).get("reads", []),
            )
            span.agents.append(ev.agent)
            self.spans.append(span)
        elif t is Transition.COMPLETE and path in self.states:
            self.states[path] = ActivityState.COMPLETED
            span = self._open_span(path)
            if span is not None:
                span.end_seq = ev.seq
                span.end_transition = t
                if ev.agent not in span.agents:
                    span.agents.append(ev.agent)
            iteration = self.iterations.get(path, 0)
            token = self._take_token(path, iteration)
            if token is not None:
                ctx = self._ctx(outcome_xml)
                origin = (path, iteration)
                for edge in self.workflow.out_edges(path):
                    self._send(Token(path, token.iteration), edge, origin, ctx)
        elif t is Transition.SUSPEND and path in self.states:
            self.pre_suspension[path] = self.states[path]
            self.states[path] = ActivityState.SUSPENDED
            span = self._open_span(path)
            if span is not None and ev.agent not in span.agents:
                span.agents.append(ev.agent)
        elif t is Transition.RESUME and path in self.states:
            self.states[path] = ev.state_after or self.pre_suspension.get(
                path, ActivityState.ACTIVE
            )
            span = self._open_span(path)
            if span is not None and ev.agent not in span.agents:
                span.agents.append(ev.agent)
        elif t is Transition.ABORT:
            if path in self.states:
                self.states[path] = ActivityState.ABORTED
                span = self._open_span(path)
                if span is not None:
                    span.end_seq = ev.seq
                    span.end_transition = t
                    if ev.agent not in span.agents:
                        span.agents.append(ev.agent)
                self._take_token(path, self.iterations.get(path, 0))
            else:
                # administrator resolution of a stuck guard: retire the token
                self.tokens = [tk for tk in self.tokens if tk.position != path]
                self.guard_errors.pop(path, None)
        if self._newly_active:
            self.activations_at[ev.seq] = list(self._newly_active)
            self._newly_active = []

    def _open_span(self, path: str) -> Optional[Span]:
        for span in reversed(self.spans):
            if span.path == path and span.end_seq is None:
                return span
        return None

    def _take_token(self, path: str, iteration: int) -> Optional[Token]:
        for tk in self.tokens:
            if tk.position == path and tk.iteration == iteration:
                self.tokens.remove(tk)
                return tk
        return None

    # -- reads --------------------------------------------------------------

    def state_of(self, path: str) -> ActivityState:
        if path not in self.states:
            raise errors.UnknownActivity(f"{self.item_id}:{path}")
        return self.states[path]


class WorkflowEngine:
    def __init__(self, store: ItemStore, registry: DescriptionRegistry):
        self.store = store
        self.registry = registry
        self._cache: dict[str, WorkflowRuntime] = {}
        self._lock = threading.RLock()
        self._listeners: list = []
        self._script_cache: dict[tuple[str, int], str] = {}

    def add_listener(self, fn) -> None:
        """fn(item_id, event) called after every accepted transition."""
        self._listeners.append(fn)

    # -- runtime derivation ----------------------------------------------------

    def _guard_source(self, name: str, version: int) -> str:
        key = (name, version)
        if key not in self._script_cache:
            self._script_cache[key] = self.registry.get_script(name, version)
        return self._script_cache[key]

    def _fresh_runtime(self, item_id: str) -> WorkflowRuntime:
        snap = self.store.snapshot(item_id)
        if snap.description_ref is None:
            raise errors.UnknownActivity(f"item {item_id} runs no workflow")
        wf_item, wf_version = snap.description_ref
        _, document, _ = self.registry.get_document(wf_item, wf_version)
        from ..descriptions.workflowdef import workflow_from_xml

        workflow = workflow_from_xml(document)
        create = self.store.list_events(item_id, 0, 0)[0]
        pins_raw = (create.data or {}).get("resolvedSchemaPins", {})
        pins = {k: (v["schemaName"], int(v["version"])) for k, v in pins_raw.items()}
        rt = WorkflowRuntime(item_id, workflow, pins, self._guard_source)
        rt.initialize()
        return rt

    def runtime(self, item_id: str, refresh: bool = False) -> WorkflowRuntime:
        """Cached incremental runtime, caught up to the item's current version."""
        with self._lock:
            snap = self.store.snapshot(item_id)
            rt = None if refresh else self._cache.get(item_id)
            if rt is None or rt.version > snap.version:
                rt = self._fresh_runtime(item_id)
            if rt.version < snap.version:
                for ev in self.store.list_events(item_id, rt.version + 1, snap.version):
                    rt.apply(ev, self._outcome_of(item_id, ev))
            self._cache[item_id] = rt
            return rt

    def replayed_runtime(self, item_id: str) -> WorkflowRuntime:
        """From-scratch derivation; must equal the cached incremental one."""
        rt = self._fresh_runtime(item_id)
        version = self.store.version(item_id)
        if version > 0:
            for ev in self.store.list_events(item_id, 1, version):
                rt.apply(ev, self._outcome_of(item_id, ev))
        return rt

    def _outcome_of(self, item_id: str, ev: Event) -> Optional[str]:
        if ev.outcome_ref is None or not self.store.has_outcome(item_id, ev.seq):
            return None
        return self.store.get_outcome(item_id, ev.seq).document

    def is_workflow_item(self, item_id: str) -> bool:
        snap = self.store.snapshot(item_id)
        return snap.property_value("Workflow") is not None and snap.description_ref is not None

    # -- agents -------------------------------------------------------------------

    def agent_roles(self, agent_id: str) -> list[str]:
        if not self.store.exists(agent_id):
            raise errors.UnknownAgent(agent_id)
        snap = self.store.snapshot(agent_id)
        kind = snap.property_value("Type")
        # Operator and Administrator resources are agents too — they hold roles
        is_agent = kind == "Agent" or (
            kind == "Resource"
            and snap.property_value("Category") in ("Operator", "Administrator")
        )
        if not is_agent:
            raise errors.UnknownAgent(f"{agent_id} is not an Agent item")
        roles = [r for r in (snap.property_value("Roles") or "").split(",") if r]
        roles.append(f"resource:{agent_id}")  # implicit self-role, see orchestrate
        return roles

    # -- jobs ------------------------------------------------------------------------

    def jobs_for_item(self, item_id: str) -> list[Job]:
        rt = self.runtime(item_id)
        jobs: list[Job] = []
        for path, state in rt.states.items():
            node = rt.workflow.node(path)
            role = node.activity.role if node and node.activity else ADMIN_ROLE
            for transition in legal_transitions(state):
                jobs.append(Job(item_id, path, transition, role))
        for xor_path in rt.guard_errors:
            jobs.append(Job(item_id, xor_path, Transition.ABORT, ADMIN_ROLE))
        return jobs

    def enabled_jobs(self, agent_id: str) -> list[Job]:
        roles = set(self.agent_roles(agent_id))
        jobs: list[Job] = []
        for item_id in self.store.item_ids():
            if not self.is_workflow_item(item_id):
                continue
            jobs.extend(j for j in self.jobs_for_item(item_id) if j.required_role in roles)
        return sorted(set(jobs), key=Job.sort_key)

    # -- transitions -------------------------------------------------------------------

    def request_transition(
        self, agent_id: str, job: Job, outcome_document: Optional[str] = None
    ) -> Event:
        roles = self.agent_roles(agent_id)
        rt = self.runtime(job.item_id)
        node = rt.workflow.node(job.activity_path)
        if node is None:
            raise errors.UnknownActivity(f"{job.item_id}:{job.activity_path}")

        if node.kind != "Activity":
            return self._resolve_guard_failure(agent_id, roles, rt, job)

        required = node.activity.role if node.activity else ADMIN_ROLE
        if required not in roles:
            raise errors.RoleDenied(f"requires role {required!r}")

        state = rt.state_of(job.activity_path)
        if not is_legal(job.transition, state):
            raise errors.IllegalTransition(
                f"{job.transition.value} is not legal from {state.value}"
            )

        pin = rt.pins.get(job.activity_path)
        outcome_ref = None
        if job.transition is Transition.COMPLETE:
            if pin is not None:
                if outcome_document is None:
                    raise errors.MissingOutcome(
                        f"activity {job.activity_path} requires schema {pin[0]}@{pin[1]}"
                    )
                violations = self.registry.validate_outcome_document(
                    pin[0], pin[1], outcome_document
                )
                if violations:
                    raise errors.SchemaValidationFailed(
                        f"outcome invalid for {pin[0]}@{pin[1]}", detail=violations
                    )
                outcome_ref = OutcomeRef(pin[0], pin[1], self.store.version(job.item_id) + 1)
            elif outcome_document is not None:
                raise errors.SchemaValidationFailed(
                    f"activity {job.activity_path} declares no outcome schema"
                )

        data = None
        if job.transition is Transition.START:
            data = {"reads": self._capture_reads(job.item_id)}

        draft = EventDraft(
            agent=agent_id,
            activity_path=job.activity_path,
            transition=job.transition,
            state_before=state,
            state_after=target_state(
                job.transition, state, rt.pre_suspension.get(job.activity_path)
            ),
            outcome_ref=outcome_ref,
            data=data,
        )
        ev = self.store.append_event(job.item_id, draft, expected_version=rt.version)
        if outcome_ref is not None:
            self.store.attach_outcome(job.item_id, ev.seq, outcome_document)
        self.runtime(job.item_id)  # synchronous progression, visible before return
        for listener in self._listeners:
            listener(job.item_id, ev)
        return ev

    def _resolve_guard_failure(self, agent_id: str, roles, rt: WorkflowRuntime, job: Job) -> Event:
        if ADMIN_ROLE not in roles:
            raise errors.RoleDenied(f"requires role {ADMIN_ROLE!r}")
        if job.transition is not Transition.ABORT or job.activity_path not in rt.guard_errors:
            raise errors.IllegalTransition(
                f"no administrator action available at {job.activity_path}"
            )
        draft = EventDraft(
            agent=agent_id,
            activity_path=job.activity_path,
            transition=Transition.ABORT,
            note="guard-resolution: stuck token retired",
        )
        ev = self.store.append_event(job.item_id, draft, expected_version=rt.version)
        self.runtime(job.item_id)
        for listener in self._listeners:
            listener(job.item_id, ev)
        return ev

    def _capture_reads(self, item_id: str) -> list[dict]:
        """Viewpoint values visible at Start time: this item's own "last"
        outcomes plus those of live collection targets (activity inputs)."""
        reads: list[dict] = []
        seen: set[tuple[str, str]] = set()

        def add(target: str):
            snap = self.store.snapshot(target)
            for schema_name in sorted(snap.outcome_seqs):
                if (target, schema_name) in seen:
                    continue
                try:
                    seq = self.store.resolve_viewpoint(target, schema_name, "last")
                except errors.UnknownViewpoint:
                    continue
                seen.add((target, schema_name))
                reads.append({"itemId": target, "schemaName": schema_name, "eventSeq": seq})

        add(item_id)
        snap = self.store.snapshot(item_id)
        for coll in snap.collections.values():
            for slot in coll.live_members():
                if self.store.exists(slot.target):
                    add(slot.target)
        return reads

    # -- reads ---------------------------------------------------------------------------

    def activity_state(self, item_id: str, activity_path: str) -> ActivityState:
        return self.runtime(item_id).state_of(activity_path)

    def progress(self, item_id: str) -> list[str]:
        """Paths newly activated by the latest event; idempotent."""
        rt = self.runtime(item_id)
        return list(rt.activations_at.get(rt.version, []))
