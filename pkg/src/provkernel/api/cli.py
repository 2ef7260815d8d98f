"""Command-line surface mirroring the API 1:1.

Human-readable lines by default, --format=json for structure. Exit codes:
0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import json
import sys
import xml.etree.ElementTree as ET
from pathlib import Path

import click

from .. import errors
from ..descriptions import schema_from_xml, workflow_from_xml, diff_report_to_dict
from ..kernel import Kernel
from ..lifecycle import Transition
from ..provenance import (
    audit_trail,
    edge_list_dump,
    export_opm,
    history_at,
    lineage,
    serialize_opm,
    usage_stats,
)
from ..store import Property, snapshot_to_dict
from ..timeutil import format_instant, parse_instant
from ..workflow import Job
from ..allocation import (
    inputs_from_xml,
    plan_to_dict,
    plan_to_xml,
)
from .auth import TokenStore
from .config import load_config


class Ctx:
    def __init__(self, config_path, storage, fmt):
        self.config = load_config(config_path)
        if storage:
            self.config.storage_root = Path(storage)
        self.fmt = fmt
        self._kernel = None

    @property
    def kernel(self) -> Kernel:
        if self._kernel is None:
            self._kernel = Kernel(self.config.storage_root)
        return self._kernel

    def emit(self, data, human_lines=None):
        if self.fmt == "json":
            click.echo(json.dumps(data, indent=2, default=str))
        elif human_lines is not None:
            for line in human_lines:
                click.echo(line)
        else:
            click.echo(json.dumps(data, indent=2, default=str))


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None, help="config file")
@click.option("--storage", type=click.Path(), default=None, help="storage root override")
@click.option("--format", "fmt", type=click.Choice(["human", "json"]), default="human")
@click.pass_context
def main(ctx, config_path, storage, fmt):
    """Description-driven provenance kernel."""
    ctx.obj = Ctx(config_path, storage, fmt)


def run(fn):
    """Domain errors exit 1 on stderr; usage errors keep click's exit 2."""

    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except errors.KernelError as exc:
            click.echo(f"error[{exc.code}]: {exc}", err=True)
            sys.exit(1)

    wrapper.__name__ = fn.__name__
    return wrapper


# -- serve -------------------------------------------------------------------------


@main.command()
@click.option("--port", type=int, default=None)
@click.pass_obj
@run
def serve(ctx: Ctx, port):
    """Run the HTTP service."""
    import uvicorn

    from .app import create_app

    config = ctx.config
    kernel = Kernel(config.storage_root)
    tokens = TokenStore(config.token_store_path)
    console_dir = Path(__file__).resolve().parents[3] / "frontend" / "dist"
    app = create_app(kernel, tokens, console_dir if console_dir.exists() else None)
    uvicorn.run(app, host="127.0.0.1", port=port or config.port, log_level="warning")


# -- agents ------------------------------------------------------------------------


@main.group()
def agent():
    """Agent provisioning."""


@agent.command("create")
@click.option("--name", required=True)
@click.option("--roles", required=True, help="comma-separated role list")
@click.option("--kind", type=click.Choice(["Human", "Computational"]), default="Human")
@click.pass_obj
@run
def agent_create(ctx: Ctx, name, roles, kind):
    kernel = ctx.kernel
    agent_id = kernel.create_agent(name, roles.split(","), kind)
    session = TokenStore(ctx.config.token_store_path).issue(agent_id)
    ctx.emit(
        {"agentItemId": agent_id, "token": session.token},
        [f"agent {agent_id}", f"token {session.token}"],
    )


# -- items --------------------------------------------------------------------------


@main.group()
def item():
    """Item operations."""


@item.command("create")
@click.option("--prop", "props", multiple=True, help="name=value")
@click.option("--immutable", "immutable_props", multiple=True, help="name=value")
@click.pass_obj
@run
def item_create(ctx: Ctx, props, immutable_props):
    properties = [Property(*p.split("=", 1)) for p in props]
    properties += [Property(*p.split("=", 1), mutable=False) for p in immutable_props]
    item_id = ctx.kernel.store.create_item(
        initial_properties=properties, agent=ctx.kernel.system_agent
    )
    ctx.emit({"itemId": item_id}, [item_id])


@item.command("get")
@click.argument("item_id")
@click.pass_obj
@run
def item_get(ctx: Ctx, item_id):
    snap = snapshot_to_dict(ctx.kernel.store.snapshot(item_id))
    lines = [f"item {item_id} v{snap['version']}"]
    lines += [f"  {p['name']} = {p['value']}" for p in snap["properties"]]
    lines += [f"  [{k}] {v}" for k, v in snap["activityStates"].items()]
    ctx.emit(snap, lines)


@item.command("events")
@click.argument("item_id")
@click.option("--from", "from_seq", type=int, default=0)
@click.option("--to", "to_seq", type=int, default=None)
@click.pass_obj
@run
def item_events(ctx: Ctx, item_id, from_seq, to_seq):
    events = ctx.kernel.store.list_events(item_id, from_seq, to_seq)
    records = [e.to_record() for e in events]
    lines = [
        f"{r['seq']}\t{r['timestamp']}\t{r['transition']}\t{r['activityPath']}" for r in records
    ]
    ctx.emit({"events": records}, lines)


@item.command("set-property")
@click.argument("item_id")
@click.argument("name")
@click.argument("value")
@click.pass_obj
@run
def item_set_property(ctx: Ctx, item_id, name, value):
    store = ctx.kernel.store
    ev = store.set_property(
        item_id, name, value, store.version(item_id), agent=ctx.kernel.system_agent
    )
    ctx.emit(ev.to_record(), [f"seq {ev.seq}"])


@item.command("query")
@click.option("--where", "pairs", multiple=True, help="name=value")
@click.pass_obj
@run
def item_query(ctx: Ctx, pairs):
    parsed = [tuple(p.split("=", 1)) for p in pairs]
    ids = ctx.kernel.store.query_items(parsed)
    ctx.emit({"items": ids}, ids)


@item.command("collection-add")
@click.argument("item_id")
@click.argument("collection")
@click.argument("target")
@click.pass_obj
@run
def item_collection_add(ctx: Ctx, item_id, collection, target):
    store = ctx.kernel.store
    ev = store.modify_collection(
        item_id,
        collection,
        {"change": "add", "target": target},
        store.version(item_id),
        agent=ctx.kernel.system_agent,
    )
    ctx.emit(ev.to_record(), [f"slot {ev.data['slotId']}"])


@item.command("collection-remove")
@click.argument("item_id")
@click.argument("collection")
@click.argument("slot_id", type=int)
@click.pass_obj
@run
def item_collection_remove(ctx: Ctx, item_id, collection, slot_id):
    store = ctx.kernel.store
    ev = store.modify_collection(
        item_id,
        collection,
        {"change": "remove", "slotId": slot_id},
        store.version(item_id),
        agent=ctx.kernel.system_agent,
    )
    ctx.emit(ev.to_record(), [f"tombstoned slot {slot_id}"])


# -- descriptions -----------------------------------------------------------------------


@main.group()
def description():
    """Description management."""


@description.command("store")
@click.option("--kind", type=click.Choice(["schema", "workflow", "script"]), required=True)
@click.option("--name", required=True)
@click.option("--file", "path", type=click.Path(exists=True), required=True)
@click.pass_obj
@run
def description_store(ctx: Ctx, kind, name, path):
    text = Path(path).read_text(encoding="utf-8")
    if kind == "schema":
        content = schema_from_xml(text)
    elif kind == "workflow":
        content = workflow_from_xml(text)
    else:
        content = text
    item_id, version = ctx.kernel.registry.store_description(kind, name, content)
    ctx.emit(
        {"descriptionItemId": item_id, "version": version},
        [f"{item_id} version {version}"],
    )


@description.command("get")
@click.argument("item_id")
@click.argument("version", type=int)
@click.pass_obj
@run
def description_get(ctx: Ctx, item_id, version):
    kind, document, version = ctx.kernel.registry.get_document(item_id, version)
    if ctx.fmt == "json":
        ctx.emit({"kind": kind, "version": version, "document": document})
    else:
        click.echo(document)


@description.command("diff")
@click.option("--name", required=True)
@click.option("-a", type=int, required=True)
@click.option("-b", type=int, required=True)
@click.pass_obj
@run
def description_diff(ctx: Ctx, name, a, b):
    report = diff_report_to_dict(ctx.kernel.registry.diff_workflow(name, a, b))
    lines = (
        [f"+ {n}" for n in report["added"]]
        + [f"- {n}" for n in report["removed"]]
        + [f"~ {c['nodeId']} ({', '.join(c['fields'])})" for c in report["changed"]]
        + [f"= {n}" for n in report["unchanged"]]
    )
    ctx.emit(report, lines)


@description.command("instantiate")
@click.option("--name", required=True)
@click.option("--version", type=int, required=True)
@click.option("--item-name", required=True)
@click.option("--prop", "props", multiple=True, help="name=value")
@click.pass_obj
@run
def description_instantiate(ctx: Ctx, name, version, item_name, props):
    properties = [Property(*p.split("=", 1)) for p in props]
    item_id = ctx.kernel.registry.instantiate(name, version, item_name, properties)
    ctx.emit({"itemId": item_id}, [item_id])


# -- jobs -----------------------------------------------------------------------------------


@main.group()
def jobs():
    """Worklist operations."""


@jobs.command("list")
@click.option("--agent", "agent_id", required=True)
@click.pass_obj
@run
def jobs_list(ctx: Ctx, agent_id):
    engine = ctx.kernel.engine
    entries = [
        {
            "itemId": j.item_id,
            "activityPath": j.activity_path,
            "transition": j.transition.value,
            "requiredRole": j.required_role,
        }
        for j in engine.enabled_jobs(agent_id)
    ]
    entries.extend(ctx.kernel.allocation.escalation_jobs(engine.agent_roles(agent_id)))
    lines = [f"{e['itemId']}\t{e['activityPath']}\t{e['transition']}" for e in entries]
    ctx.emit({"jobs": entries}, lines)


@jobs.command("run")
@click.option("--agent", "agent_id", required=True)
@click.option("--item", "item_id", required=True)
@click.option("--path", "activity_path", required=True)
@click.option("--transition", required=True)
@click.option("--outcome", "outcome_path", type=click.Path(exists=True), default=None)
@click.pass_obj
@run
def jobs_run(ctx: Ctx, agent_id, item_id, activity_path, transition, outcome_path):
    outcome = Path(outcome_path).read_text(encoding="utf-8") if outcome_path else None
    job = Job(item_id, activity_path, Transition(transition), "")
    ev = ctx.kernel.engine.request_transition(agent_id, job, outcome)
    ctx.emit(ev.to_record(), [f"seq {ev.seq} {ev.transition.value} {ev.activity_path}"])


# -- provenance -------------------------------------------------------------------------------


@main.group()
def provenance():
    """Provenance reads."""


@provenance.command("audit")
@click.argument("item_id")
@click.pass_obj
@run
def provenance_audit(ctx: Ctx, item_id):
    rows = audit_trail(ctx.kernel.store, item_id)
    data = [
        {
            "event": r.event.to_record(),
            "agentName": r.agent_name,
            "outcomeSummary": r.outcome_summary,
        }
        for r in rows
    ]
    lines = [
        f"{r.event.seq}\t{format_instant(r.event.timestamp)}\t{r.event.transition.value}"
        f"\t{r.agent_name}\t{r.outcome_summary or ''}"
        for r in rows
    ]
    ctx.emit({"rows": data}, lines)


@provenance.command("opm")
@click.argument("item_ids", nargs=-1, required=True)
@click.option("--edges", is_flag=True, help="line-oriented edge dump instead of XML")
@click.pass_obj
@run
def provenance_opm(ctx: Ctx, item_ids, edges):
    graph = export_opm(ctx.kernel.store, set(item_ids), engine=ctx.kernel.engine)
    click.echo(edge_list_dump(graph) if edges else serialize_opm(graph))


@provenance.command("stats")
@click.argument("item_id")
@click.option("--from", "window_from", required=True)
@click.option("--to", "window_to", required=True)
@click.pass_obj
@run
def provenance_stats(ctx: Ctx, item_id, window_from, window_to):
    st = usage_stats(
        ctx.kernel.store, item_id, parse_instant(window_from), parse_instant(window_to)
    )
    data = {
        "activeMinutes": st.active_minutes,
        "completions": st.completions,
        "aborts": st.aborts,
        "perTaskType": [{"type": t, "count": c} for t, c in st.per_task_type],
    }
    ctx.emit(
        data,
        [
            f"active minutes: {st.active_minutes}",
            f"completions: {st.completions}",
            f"aborts: {st.aborts}",
        ]
        + [f"  {t}: {c}" for t, c in st.per_task_type],
    )


@provenance.command("at")
@click.argument("item_id")
@click.argument("instant")
@click.pass_obj
@run
def provenance_at(ctx: Ctx, item_id, instant):
    snap = history_at(ctx.kernel.store, item_id, parse_instant(instant))
    ctx.emit(snapshot_to_dict(snap))


@provenance.command("lineage")
@click.argument("item_id")
@click.argument("seq", type=int)
@click.pass_obj
@run
def provenance_lineage(ctx: Ctx, item_id, seq):
    chain = lineage(ctx.kernel.store, item_id, seq)
    ctx.emit(
        {"chain": [{"itemId": i, "eventSeq": s} for i, s in chain]},
        [f"{i}#{s}" for i, s in chain],
    )


# -- allocation ----------------------------------------------------------------------------------


def _read_inputs(tasks_path, resources_path):
    """Accept allocationInput documents or bare <tasks>/<resources> roots."""

    def normalize(path):
        text = Path(path).read_text(encoding="utf-8")
        root = ET.fromstring(text)
        if root.tag == "allocationInput":
            return root
        wrapper = ET.Element("allocationInput")
        wrapper.extend(list(root))
        return wrapper

    merged = ET.Element("allocationInput")
    for path in (tasks_path, resources_path):
        if path:
            merged.extend(list(normalize(path)))
    return inputs_from_xml(ET.tostring(merged, encoding="unicode"))


@main.command()
@click.option("--tasks", "tasks_path", type=click.Path(exists=True), required=True)
@click.option("--resources", "resources_path", type=click.Path(exists=True), required=True)
@click.option("--from", "horizon_from", required=True)
@click.option("--to", "horizon_to", required=True)
@click.pass_obj
@run
def allocate(ctx: Ctx, tasks_path, resources_path, horizon_from, horizon_to):
    """Build an allocation plan; prints the plan document."""
    tasks, resources, procedures = _read_inputs(tasks_path, resources_path)
    plan_item, plan = ctx.kernel.allocation.create_plan(
        tasks, resources, parse_instant(horizon_from), parse_instant(horizon_to), procedures
    )
    if ctx.fmt == "json":
        ctx.emit({"planItemId": plan_item, "plan": plan_to_dict(plan)})
    else:
        click.echo(f"plan {plan_item}", err=True)
        click.echo(plan_to_xml(plan))


@main.group()
def plan():
    """Plan operations."""


@plan.command("get")
@click.argument("plan_item_id")
@click.pass_obj
@run
def plan_get(ctx: Ctx, plan_item_id):
    p = ctx.kernel.allocation.load_plan(plan_item_id)
    if ctx.fmt == "json":
        ctx.emit(plan_to_dict(p))
    else:
        click.echo(plan_to_xml(p))


@plan.command("override")
@click.argument("plan_item_id")
@click.option("--task", "task_id", required=True)
@click.option("--resource", "resource_item_id", required=True)
@click.option("--start", required=True)
@click.pass_obj
@run
def plan_override(ctx: Ctx, plan_item_id, task_id, resource_item_id, start):
    p = ctx.kernel.allocation.override(
        plan_item_id, task_id, resource_item_id, parse_instant(start)
    )
    ctx.emit(plan_to_dict(p), [plan_to_xml(p)])


@plan.command("activate")
@click.argument("plan_item_id")
@click.pass_obj
@run
def plan_activate(ctx: Ctx, plan_item_id):
    ctx.kernel.allocation.activate(plan_item_id)
    ctx.emit({"planItemId": plan_item_id, "status": "Active"}, ["activated"])


@plan.command("orchestrate")
@click.argument("plan_item_id")
@click.pass_obj
@run
def plan_orchestrate(ctx: Ctx, plan_item_id):
    items = ctx.kernel.allocation.orchestrate(plan_item_id)
    ctx.emit({"items": items}, items)


if __name__ == "__main__":
    main()
