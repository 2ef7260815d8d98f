"""Workflow definitions: directed graphs of activities with AND/XOR routing.

Graph invariants (validate_workflow_graph reports every violation, no
fail-fast): exactly one Start and at least one End; every node reachable from
Start; End reachable from every node; guards only on XorSplit out-edges with
exactly one guardless default edge (highest order) per XorSplit; AndSplit
fan-out >= 2 and AndJoin fan-in >= 2; cycles only through Xor nodes.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Optional

from .. import errors
from .schema import parse_xml

NODE_KINDS = ("Start", "End", "Activity", "AndSplit", "AndJoin", "XorSplit", "XorJoin")

LATEST_AT_INSTANTIATION = "latest-at-instantiation"


@dataclass
class ActivityDescription:
    name: str
    role: str
    # (schemaName, version) with version an int pin or LATEST_AT_INSTANTIATION
    outcome_schema: Optional[tuple[str, object]] = None
    description: str = ""


@dataclass
class WorkflowNode:
    node_id: str
    kind: str
    activity: Optional[ActivityDescription] = None


@dataclass
class WorkflowEdge:
    from_id: str
    to_id: str
    order: int = 0
    guard: Optional[tuple[str, int]] = None  # (scriptName, version)


@dataclass
class WorkflowDescription:
    name: str
    version: int
    nodes: list[WorkflowNode] = field(default_factory=list)
    edges: list[WorkflowEdge] = field(default_factory=list)

    def node(self, node_id: str) -> Optional[WorkflowNode]:
        return next((n for n in self.nodes if n.node_id == node_id), None)

    def out_edges(self, node_id: str) -> list[WorkflowEdge]:
        return sorted(
            (e for e in self.edges if e.from_id == node_id), key=lambda e: e.order
        )

    def in_edges(self, node_id: str) -> list[WorkflowEdge]:
        return sorted((e for e in self.edges if e.to_id == node_id), key=lambda e: e.order)

    def start_node(self) -> Optional[WorkflowNode]:
        return next((n for n in self.nodes if n.kind == "Start"), None)


@dataclass
class DiffReport:
    added: list[str] = field(default_factory=list)
    removed: list[str] = field(default_factory=list)
    changed: list[tuple[str, list[str]]] = field(default_factory=list)
    unchanged: list[str] = field(default_factory=list)
    # ((from, to), "Added" | "Removed" | "GuardChanged")
    edge_changes: list[tuple[tuple[str, str], str]] = field(default_factory=list)


# -- validation -----------------------------------------------------------------


def _reachable(adjacency: dict[str, list[str]], roots: list[str]) -> set[str]:
    seen = set(roots)
    stack = list(roots)
    while stack:
        for nxt in adjacency.get(stack.pop(), ()):
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


def _nontrivial_sccs(node_ids: list[str], adjacency: dict[str, list[str]]) -> list[set[str]]:
    """Tarjan; returns SCCs that contain a cycle (size > 1 or a self-loop)."""
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    sccs: list[set[str]] = []
    counter = [0]

    def strongconnect(v: str):
        work = [(v, iter(adjacency.get(v, ())))]
        index[v] = low[v] = counter[0]
        counter[0] += 1
        stack.append(v)
        on_stack.add(v)
        while work:
            node, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter[0]
                    counter[0] += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(adjacency.get(w, ()))))
                    advanced = True
                    break
                if w in on_stack:
                    low[node] = min(low[node], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                comp = set()
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.add(w)
                    if w == node:
                        break
                if len(comp) > 1 or node in adjacency.get(node, ()):
                    sccs.append(comp)

    for v in node_ids:
        if v not in index:
            strongconnect(v)
    return sccs


def validate_workflow_graph(wf: WorkflowDescription) -> list[str]:
    """Returns every violation as a human-readable string; empty means ok."""
    violations: list[str] = []
    ids = [n.node_id for n in wf.nodes]
    dup = {i for i in ids if ids.count(i) > 1}
    if dup:
        violations.append(f"duplicate node ids: {sorted(dup)}")

    for n in wf.nodes:
        if n.kind not in NODE_KINDS:
            violations.append(f"node '{n.node_id}' has unknown kind '{n.kind}'")
        if n.kind == "Activity" and n.activity is None:
            violations.append(f"activity node '{n.node_id}' is missing its activity description")

    known = set(ids)
    for e in wf.edges:
        if e.from_id not in known or e.to_id not in known:
            violations.append(f"edge {e.from_id}->{e.to_id} references an unknown node")

    starts = [n for n in wf.nodes if n.kind == "Start"]
    ends = [n for n in wf.nodes if n.kind == "End"]
    if len(starts) != 1:
        violations.append(f"exactly one Start required, found {len(starts)}")
    if not ends:
        violations.append("at least one End required")

    adjacency: dict[str, list[str]] = {}
    reverse: dict[str, list[str]] = {}
    for e in wf.edges:
        adjacency.setdefault(e.from_id, []).append(e.to_id)
        reverse.setdefault(e.to_id, []).append(e.from_id)

    if len(starts) == 1:
        reach = _reachable(adjacency, [starts[0].node_id])
        for nid in ids:
            if nid not in reach:
                violations.append(f"node '{nid}' is unreachable from Start")
    if ends:
        co_reach = _reachable(reverse, [n.node_id for n in ends])
        for nid in ids:
            if nid not in co_reach:
                violations.append(f"no End is reachable from node '{nid}'")

    for n in wf.nodes:
        outs = wf.out_edges(n.node_id)
        ins = wf.in_edges(n.node_id)
        if n.kind == "XorSplit":
            defaults = [e for e in outs if e.guard is None]
            if len(defaults) != 1:
                violations.append(
                    f"XorSplit '{n.node_id}' needs exactly one guardless default edge, "
                    f"found {len(defaults)}"
                )
            elif outs and defaults[0].order != max(e.order for e in outs):
                violations.append(
                    f"XorSplit '{n.node_id}': the default edge must have the highest order"
                )
        else:
            for e in outs:
                if e.guard is not None:
                    violations.append(
                        f"guard on non-XorSplit edge {e.from_id}->{e.to_id}"
                    )
        if n.kind == "AndSplit" and len(outs) < 2:
            violations.append(f"AndSplit '{n.node_id}' must have out-degree >= 2")
        if n.kind == "AndJoin" and len(ins) < 2:
            violations.append(f"AndJoin '{n.node_id}' must have in-degree >= 2")
        if n.kind == "End" and outs:
            violations.append(f"End '{n.node_id}' must have no out-edges")
        if n.kind == "Start" and ins:
            violations.append(f"Start '{n.node_id}' must have no in-edges")

    kind_of = {n.node_id: n.kind for n in wf.nodes}
    for scc in _nontrivial_sccs(ids, adjacency):
        and_nodes = sorted(x for x in scc if kind_of.get(x) in ("AndSplit", "AndJoin"))
        if and_nodes:
            violations.append(
                f"cycle through And node(s) {and_nodes} — cycles may only pass through Xor nodes"
            )
        if not any(kind_of.get(x) == "XorSplit" for x in scc):
            violations.append(
                f"cycle {sorted(scc)} has no XorSplit to exit through"
            )
    return violations


# -- diff --------------------------------------------------------------------------


def _activity_fields(node: WorkflowNode) -> dict:
    a = node.activity
    return {
        "kind": node.kind,
        "role": a.role if a else None,
        "outcomeSchema": tuple(a.outcome_schema) if a and a.outcome_schema else None,
        "description": a.description if a else None,
    }


def diff_workflows(a: WorkflowDescription, b: WorkflowDescription) -> DiffReport:
    """Nodes matched by nodeId; field-level changes for matched nodes."""
    a_ids = {n.node_id for n in a.nodes}
    b_ids = {n.node_id for n in b.nodes}
    report = DiffReport(
        added=sorted(b_ids - a_ids),
        removed=sorted(a_ids - b_ids),
    )
    for nid in sorted(a_ids & b_ids):
        fa = _activity_fields(a.node(nid))
        fb = _activity_fields(b.node(nid))
        changed = [k for k in ("kind", "role", "outcomeSchema", "description") if fa[k] != fb[k]]
        if changed:
            report.changed.append((nid, changed))
        else:
            report.unchanged.append(nid)

    def edge_map(wf: WorkflowDescription):
        return {(e.from_id, e.to_id): e for e in wf.edges}

    ea, eb = edge_map(a), edge_map(b)
    for key in sorted(set(ea) | set(eb)):
        if key not in ea:
            report.edge_changes.append((key, "Added"))
        elif key not in eb:
            report.edge_changes.append((key, "Removed"))
        elif ea[key].guard != eb[key].guard or ea[key].order != eb[key].order:
            report.edge_changes.append((key, "GuardChanged"))
    return report


def diff_report_to_dict(report: DiffReport) -> dict:
    return {
        "added": report.added,
        "removed": report.removed,
        "changed": [{"nodeId": n, "fields": f} for n, f in report.changed],
        "unchanged": report.unchanged,
        "edgeChanges": [
            {"from": e[0], "to": e[1], "change": c} for e, c in report.edge_changes
        ],
    }


# -- serialization ------------------------------------------------------------------


def workflow_to_xml(wf: WorkflowDescription) -> str:
    root = ET.Element("workflowDescription")
    ET.SubElement(root, "name").text = wf.name
    ET.SubElement(root, "version").text = str(wf.version)
    nodes = ET.SubElement(root, "nodes")
    for n in wf.nodes:
        node_el = ET.SubElement(nodes, "node")
        ET.SubElement(node_el, "nodeId").text = n.node_id
        ET.SubElement(node_el, "kind").text = n.kind
        if n.activity is not None:
            act = ET.SubElement(node_el, "activity")
            ET.SubElement(act, "name").text = n.activity.name
            ET.SubElement(act, "role").text = n.activity.role
            if n.activity.outcome_schema is not None:
                schema_el = ET.SubElement(act, "outcomeSchema")
                ET.SubElement(schema_el, "schemaName").text = n.activity.outcome_schema[0]
                ET.SubElement(schema_el, "version").text = str(n.activity.outcome_schema[1])
            ET.SubElement(act, "description").text = n.activity.description
    edges = ET.SubElement(root, "edges")
    for e in wf.edges:
        edge_el = ET.SubElement(edges, "edge")
        ET.SubElement(edge_el, "from").text = e.from_id
        ET.SubElement(edge_el, "to").text = e.to_id
        ET.SubElement(edge_el, "order").text = str(e.order)
        if e.guard is not None:
            guard_el = ET.SubElement(edge_el, "guard")
            ET.SubElement(guard_el, "scriptName").text = e.guard[0]
            ET.SubElement(guard_el, "version").text = str(e.guard[1])
    return ET.tostring(root, encoding="unicode")


def workflow_from_xml(document: str) -> WorkflowDescription:
    root = parse_xml(document)
    if root.tag != "workflowDescription":
        raise errors.MalformedDocument(f"expected workflowDescription, got {root.tag}")
    wf = WorkflowDescription(
        name=root.findtext("name", ""), version=int(root.findtext("version", "0"))
    )
    nodes = root.find("nodes")
    for node_el in nodes if nodes is not None else []:
        activity = None
        act_el = node_el.find("activity")
        if act_el is not None:
            outcome_schema = None
            schema_el = act_el.find("outcomeSchema")
            if schema_el is not None:
                ver_text = schema_el.findtext("version", LATEST_AT_INSTANTIATION)
                version = (
                    LATEST_AT_INSTANTIATION
                    if ver_text == LATEST_AT_INSTANTIATION
                    else int(ver_text)
                )
                outcome_schema = (schema_el.findtext("schemaName", ""), version)
            activity = ActivityDescription(
                name=act_el.findtext("name", ""),
                role=act_el.findtext("role", ""),
                outcome_schema=outcome_schema,
                description=act_el.findtext("description") or "",
            )
        wf.nodes.append(
            WorkflowNode(
                node_id=node_el.findtext("nodeId", ""),
                kind=node_el.findtext("kind", ""),
                activity=activity,
            )
        )
    edges = root.find("edges")
    for edge_el in edges if edges is not None else []:
        guard = None
        guard_el = edge_el.find("guard")
        if guard_el is not None:
            guard = (guard_el.findtext("scriptName", ""), int(guard_el.findtext("version", "1")))
        wf.edges.append(
            WorkflowEdge(
                from_id=edge_el.findtext("from", ""),
                to_id=edge_el.findtext("to", ""),
                order=int(edge_el.findtext("order", "0")),
                guard=guard,
            )
        )
    return wf
