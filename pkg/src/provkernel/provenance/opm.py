"""OPM-compliant provenance graphs: export, constraints, XML round-trip.

Node ids are deterministic ("artifact:{item}:{seq}", "process:{item}:{path}:
{iteration}", "agent:{itemId}") so exports diff cleanly. Edges point from
effect to cause; the subgraph on {used, wasGeneratedBy, wasDerivedFrom,
wasTriggeredBy} must be acyclic (wasControlledBy is attribution, not
causality).
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .. import errors
from ..lifecycle import Transition
from ..store import Event, ItemStore

ARTIFACT, PROCESS, AGENT = "Artifact", "Process", "Agent"
EDGE_KINDS = ("used", "wasGeneratedBy", "wasControlledBy", "wasDerivedFrom", "wasTriggeredBy")
CAUSAL_KINDS = ("used", "wasGeneratedBy", "wasDerivedFrom", "wasTriggeredBy")

# edge kind -> (effect node kind, cause node kind)
_ENDPOINTS = {
    "used": (PROCESS, ARTIFACT),
    "wasGeneratedBy": (ARTIFACT, PROCESS),
    "wasControlledBy": (PROCESS, AGENT),
    "wasDerivedFrom": (ARTIFACT, ARTIFACT),
    "wasTriggeredBy": (PROCESS, PROCESS),
}


@dataclass(frozen=True)
class OpmNode:
    id: str
    kind: str
    attributes: tuple = ()  # ((name, value), ...)


@dataclass(frozen=True)
class OpmEdge:
    kind: str
    effect: str  # "from" — the dependent end
    cause: str  # "to" — what it depends on


@dataclass
class OpmGraph:
    nodes: list[OpmNode] = field(default_factory=list)
    edges: list[OpmEdge] = field(default_factory=list)

    def node_ids(self) -> set[str]:
        return {n.id for n in self.nodes}

    def normalized(self) -> "OpmGraph":
        order = {ARTIFACT: 0, PROCESS: 1, AGENT: 2}
        nodes = sorted(set(self.nodes), key=lambda n: (order.get(n.kind, 9), n.id))
        edges = sorted(set(self.edges), key=lambda e: (e.kind, e.effect, e.cause))
        return OpmGraph(nodes, edges)


def artifact_id(item_id: str, seq: int) -> str:
    return f"artifact:{item_id}:{seq}"


def process_id(item_id: str, path: str, iteration: int) -> str:
    return f"process:{item_id}:{path}:{iteration}"


def agent_id(item_id: str) -> str:
    return f"agent:{item_id}"


@dataclass
class _RawSpan:
    path: str
    iteration: int
    start_seq: int
    agents: list[str]
    reads: list[dict]
    end_seq: Optional[int] = None
    end_transition: Optional[Transition] = None


def _scan_spans(events: list[Event]) -> list[_RawSpan]:
    """Start..terminal spans straight off the log; iteration = occurrence
    index of the Start at that path. Lone Complete events form no span."""
    spans: list[_RawSpan] = []
    open_by_path: dict[str, _RawSpan] = {}
    start_counts: dict[str, int] = {}
    for ev in events:
        if ev.transition is Transition.START:
            iteration = start_counts.get(ev.activity_path, 0)
            start_counts[ev.activity_path] = iteration + 1
            span = _RawSpan(
                path=ev.activity_path,
                iteration=iteration,
                start_seq=ev.seq,
                agents=[ev.agent],
                reads=list((ev.data or {}).get("reads", [])),
            )
            spans.append(span)
            open_by_path[ev.activity_path] = span
        elif ev.transition in (Transition.SUSPEND, Transition.RESUME):
            span = open_by_path.get(ev.activity_path)
            if span is not None and ev.agent not in span.agents:
                span.agents.append(ev.agent)
        elif ev.transition in (Transition.COMPLETE, Transition.ABORT):
            span = open_by_path.pop(ev.activity_path, None)
            if span is not None:
                span.end_seq = ev.seq
                span.end_transition = ev.transition
                if ev.agent not in span.agents:
                    span.agents.append(ev.agent)
    return spans


def export_opm(store: ItemStore, item_ids: Iterable[str], engine=None) -> OpmGraph:
    """Map items' histories onto an OPM graph.

    Outcomes become Artifacts; Start..terminal spans become Processes (one
    per iteration); agents appearing in events become Agent nodes. Edges:
    generation by the completing span, control by the span's agents, use of
    the viewpoint reads captured at Start, derivation from the previous
    same-schema artifact plus everything the generator used, triggering by
    the workflow predecessor's span. References leaving the requested set
    become boundary artifacts marked external=true.
    """
    requested = sorted(set(item_ids))
    for item_id in requested:
        if not store.exists(item_id):
            raise errors.UnknownItem(item_id)

    graph = OpmGraph()
    boundary: set[str] = set()

    def ensure_boundary(aid: str):
        if aid not in boundary:
            boundary.add(aid)
            graph.nodes.append(OpmNode(aid, ARTIFACT, (("external", "true"),)))

    for item_id in requested:
        events = store.list_events(item_id)
        spans = _scan_spans(events)
        span_by_end = {s.end_seq: s for s in spans if s.end_seq is not None}
        span_ids = {
            (s.path, s.iteration): process_id(item_id, s.path, s.iteration) for s in spans
        }

        # (a) artifacts; (c) agents
        artifacts_here: list[tuple[int, str]] = []  # (seq, schemaName)
        agents_here: set[str] = set()
        for ev in events:
            agents_here.add(ev.agent)
            if ev.outcome_ref is not None and store.has_outcome(item_id, ev.seq):
                ref = ev.outcome_ref
                artifacts_here.append((ev.seq, ref.schema_name))
                graph.nodes.append(
                    OpmNode(
                        artifact_id(item_id, ev.seq),
                        ARTIFACT,
                        (
                            ("itemId", item_id),
                            ("eventSeq", str(ev.seq)),
                            ("schemaName", ref.schema_name),
                            ("schemaVersion", str(ref.schema_version)),
                        ),
                    )
                )
        for a in sorted(agents_here):
            name = a
            if store.exists(a):
                name = store.snapshot(a).property_value("Name") or a
            graph.nodes.append(OpmNode(agent_id(a), AGENT, (("name", name),)))

        # (b) processes; (e) control edges; (f) used edges
        for span in spans:
            pid = process_id(item_id, span.path, span.iteration)
            attrs = (
                ("itemId", item_id),
                ("path", span.path),
                ("iteration", str(span.iteration)),
                ("startSeq", str(span.start_seq)),
                ("endSeq", "" if span.end_seq is None else str(span.end_seq)),
            )
            graph.nodes.append(OpmNode(pid, PROCESS, attrs))
            for a in span.agents:
                graph.edges.append(OpmEdge("wasControlledBy", pid, agent_id(a)))
            for read in span.reads:
                aid = artifact_id(read["itemId"], int(read["eventSeq"]))
                if read["itemId"] not in requested:
                    ensure_boundary(aid)
                graph.edges.append(OpmEdge("used", pid, aid))

        # (d) generation; (g) derivation; (h) triggering
        last_by_schema: dict[str, int] = {}
        for seq, schema_name in artifacts_here:
            aid = artifact_id(item_id, seq)
            generator = span_by_end.get(seq)
            if generator is not None and generator.end_transition is Transition.COMPLETE:
                pid = process_id(item_id, generator.path, generator.iteration)
                graph.edges.append(OpmEdge("wasGeneratedBy", aid, pid))
                for read in generator.reads:
                    parent = artifact_id(read["itemId"], int(read["eventSeq"]))
                    if read["itemId"] not in requested:
                        ensure_boundary(parent)
                    graph.edges.append(OpmEdge("wasDerivedFrom", aid, parent))
            prev = last_by_schema.get(schema_name)
            if prev is not None:
                graph.edges.append(
                    OpmEdge("wasDerivedFrom", aid, artifact_id(item_id, prev))
                )
            last_by_schema[schema_name] = seq

        if engine is not None and store.snapshot(item_id).description_ref is not None:
            try:
                rt = engine.runtime(item_id)
            except errors.KernelError:
                rt = None
            if rt is not None:
                for (path, iteration), (src_path, src_iter) in sorted(
                    rt.triggered_by.items()
                ):
                    effect = span_ids.get((path, iteration))
                    cause = span_ids.get((src_path, src_iter))
                    if effect and cause:
                        graph.edges.append(OpmEdge("wasTriggeredBy", effect, cause))

    return graph.normalized()


# -- constraint checks (also used by the test suite) ---------------------------


def check_opm(graph: OpmGraph) -> list[str]:
    violations: list[str] = []
    kinds = {n.id: n.kind for n in graph.nodes}
    ids = list(kinds)
    if len(ids) != len(graph.nodes):
        violations.append("duplicate node ids")
    for n in graph.nodes:
        prefix = n.id.split(":", 1)[0]
        if prefix != n.kind.lower():
            violations.append(f"node {n.id}: kind {n.kind} does not match id prefix")
    generators: dict[str, int] = {}
    for e in graph.edges:
        if e.kind not in _ENDPOINTS:
            violations.append(f"unknown edge kind {e.kind}")
            continue
        want_effect, want_cause = _ENDPOINTS[e.kind]
        if kinds.get(e.effect) != want_effect:
            violations.append(f"{e.kind} effect {e.effect} is not a {want_effect}")
        if kinds.get(e.cause) != want_cause:
            violations.append(f"{e.kind} cause {e.cause} is not a {want_cause}")
        if e.kind == "wasGeneratedBy":
            generators[e.effect] = generators.get(e.effect, 0) + 1
    for aid, count in generators.items():
        if count > 1:
            violations.append(f"artifact {aid} has {count} generators")
    if topological_order(graph) is None:
        violations.append("causal subgraph has a cycle")
    return violations


def topological_order(graph: OpmGraph) -> Optional[list[str]]:
    """Kahn's algorithm over the causal edges; None when cyclic."""
    nodes = graph.node_ids()
    out: dict[str, list[str]] = {n: [] for n in nodes}
    indeg: dict[str, int] = {n: 0 for n in nodes}
    for e in graph.edges:
        if e.kind in CAUSAL_KINDS and e.effect in nodes and e.cause in nodes:
            out[e.effect].append(e.cause)
            indeg[e.cause] += 1
    queue = sorted(n for n in nodes if indeg[n] == 0)
    order: list[str] = []
    while queue:
        n = queue.pop(0)
        order.append(n)
        for m in sorted(out[n]):
            indeg[m] -= 1
            if indeg[m] == 0:
                queue.append(m)
    return order if len(order) == len(nodes) else None


# -- serialization -----------------------------------------------------------------

_SECTION = {ARTIFACT: "artifacts", PROCESS: "processes", AGENT: "agents"}
_ELEMENT = {ARTIFACT: "artifact", PROCESS: "process", AGENT: "agent"}


def serialize_opm(graph: OpmGraph) -> str:
    graph = graph.normalized()
    root = ET.Element("opmGraph")
    sections = {
        kind: ET.SubElement(root, section) for kind, section in _SECTION.items()
    }
    for n in graph.nodes:
        el = ET.SubElement(sections[n.kind], _ELEMENT[n.kind], {"id": n.id})
        for name, value in n.attributes:
            ET.SubElement(el, "attribute", {"name": name, "value": value})
    deps = ET.SubElement(root, "dependencies")
    for e in graph.edges:
        ET.SubElement(deps, e.kind, {"effect": e.effect, "cause": e.cause})
    return ET.tostring(root, encoding="unicode")


def deserialize_opm(text: str) -> OpmGraph:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise errors.MalformedDocument(str(exc)) from exc
    if root.tag != "opmGraph":
        raise errors.MalformedDocument(f"expected opmGraph, got {root.tag}")
    graph = OpmGraph()
    for kind, section in _SECTION.items():
        holder = root.find(section)
        for el in holder if holder is not None else []:
            node_id = el.get("id")
            if node_id is None:
                raise errors.MalformedDocument(f"{el.tag} without id")
            attrs = tuple(
                (a.get("name", ""), a.get("value", "")) for a in el.findall("attribute")
            )
            graph.nodes.append(OpmNode(node_id, kind, attrs))
    deps = root.find("dependencies")
    for el in deps if deps is not None else []:
        if el.tag not in EDGE_KINDS:
            raise errors.MalformedDocument(f"unknown dependency {el.tag}")
        effect, cause = el.get("effect"), el.get("cause")
        if effect is None or cause is None:
            raise errors.MalformedDocument(f"{el.tag} missing effect/cause")
        graph.edges.append(OpmEdge(el.tag, effect, cause))
    return graph.normalized()


def edge_list_dump(graph: OpmGraph) -> str:
    """One edge per line — kind, from, to — for quick diffing."""
    return "\n".join(
        f"{e.kind}\t{e.effect}\t{e.cause}" for e in graph.normalized().edges
    )
