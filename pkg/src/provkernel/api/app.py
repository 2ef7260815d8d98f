"""HTTP surface: thin handlers over the kernel modules.

JSON everywhere except outcome documents and OPM exports, which travel as
XML. There is no DELETE anywhere — the store is append-only and the API
cannot say otherwise. Every domain error maps to a stable machine-readable
code (the error class name).
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from fastapi import Depends, FastAPI, Header, Request, Response
from fastapi.responses import JSONResponse

from .. import errors
from ..descriptions import (
    KIND_SCHEMA,
    KIND_SCRIPT,
    KIND_WORKFLOW,
    diff_report_to_dict,
    schema_from_xml,
    workflow_from_xml,
)
from ..kernel import Kernel
from ..lifecycle import ActivityState, Transition
from ..provenance import (
    audit_trail,
    edge_list_dump,
    export_opm,
    history_at,
    lineage,
    serialize_opm,
    usage_stats,
)
from ..store import EventDraft, OutcomeRef, Property, snapshot_to_dict
from ..timeutil import format_instant, parse_instant
from ..workflow import Job
from ..allocation import inputs_from_xml, plan_to_dict, plan_to_xml
from .auth import TokenStore

# error class name -> http status
_STATUS = {
    "AuthFailed": 401,
    "RoleDenied": 403,
    "ImmutablePropertyViolation": 403,
    "UnknownItem": 404,
    "UnknownDescription": 404,
    "UnknownEvent": 404,
    "UnknownViewpoint": 404,
    "UnknownAgent": 404,
    "UnknownActivity": 404,
    "UnknownOutcome": 404,
    "UnknownTask": 404,
    "UnknownTarget": 404,
    "UnknownSlot": 404,
    "VersionConflict": 409,
    "OutcomeAlreadyPresent": 409,
    "SlotAlreadyTombstoned": 409,
    "DuplicateViewName": 409,
    "IllegalTransition": 409,
    "InfeasibleOverride": 409,
    "PlanNotActive": 409,
    "StaleAssignment": 409,
    "DuplicatePropertyName": 400,
    "SchemaValidationFailed": 400,
    "ValidationFailed": 400,
    "ParseError": 400,
    "EvaluationError": 400,
    "NotWellFormed": 400,
    "MalformedDocument": 400,
    "BeforeCreation": 400,
    "MissingOutcome": 400,
}


def _error_body(code: str, message: str, detail=None) -> dict:
    return {"code": code, "message": message, "detail": detail}


def create_app(kernel: Kernel, tokens: TokenStore, console_dir: Optional[Path] = None) -> FastAPI:
    app = FastAPI(title="provkernel", version="0.1.0")
    store, registry, engine, allocation = (
        kernel.store,
        kernel.registry,
        kernel.engine,
        kernel.allocation,
    )

    @app.exception_handler(errors.KernelError)
    async def kernel_error_handler(_req: Request, exc: errors.KernelError):
        status = _STATUS.get(exc.code, 500)
        return JSONResponse(
            status_code=status, content=_error_body(exc.code, str(exc), exc.detail)
        )

    @app.exception_handler(ValueError)
    async def value_error_handler(_req: Request, exc: ValueError):
        return JSONResponse(status_code=400, content=_error_body("BadRequest", str(exc)))

    @app.exception_handler(Exception)
    async def fallback_handler(_req: Request, exc: Exception):
        return JSONResponse(
            status_code=500, content=_error_body("InternalError", str(exc))
        )

    def agent_of(authorization: Optional[str] = Header(default=None)) -> str:
        if authorization is None or not authorization.startswith("Bearer "):
            raise errors.AuthFailed("missing bearer token")
        return tokens.authenticate(authorization[len("Bearer ") :])

    @app.get("/health")
    async def health():
        return {"status": "ok", "version": app.version}

    # -- items ------------------------------------------------------------------

    @app.post("/api/v1/items")
    async def create_item(body: dict, agent: str = Depends(agent_of)):
        props = [
            Property(p["name"], p["value"], bool(p.get("mutable", True)))
            for p in body.get("properties", [])
        ]
        ref = body.get("descriptionRef")
        description_ref = (ref["itemId"], int(ref["version"])) if ref else None
        item_id = store.create_item(description_ref, props, agent=agent)
        return snapshot_to_dict(store.snapshot(item_id))

    @app.get("/api/v1/items")
    async def query_items(request: Request, _agent: str = Depends(agent_of)):
        names = request.query_params.getlist("name")
        values = request.query_params.getlist("value")
        if len(names) != len(values):
            raise ValueError("name/value query parameters must pair up")
        return {"items": store.query_items(list(zip(names, values)))}

    @app.get("/api/v1/items/{item_id}")
    async def get_item(item_id: str, _agent: str = Depends(agent_of)):
        return snapshot_to_dict(store.snapshot(item_id))

    @app.get("/api/v1/items/{item_id}/events")
    async def get_events(item_id: str, request: Request, _agent: str = Depends(agent_of)):
        from_seq = int(request.query_params.get("from", 0))
        to_raw = request.query_params.get("to")
        events = store.list_events(
            item_id, from_seq, int(to_raw) if to_raw is not None else None
        )
        return {"events": [e.to_record() for e in events]}

    @app.post("/api/v1/items/{item_id}/events")
    async def append_event(item_id: str, body: dict, agent: str = Depends(agent_of)):
        draft_body = body.get("draft", {})
        ref = draft_body.get("outcomeRef")
        outcome_ref = (
            OutcomeRef(
                ref["schemaName"], int(ref["schemaVersion"]), int(ref["eventSeq"]),
                ref.get("view"),
            )
            if ref
            else None
        )
        draft = EventDraft(
            agent=agent,
            activity_path=draft_body.get("activityPath", ""),
            transition=Transition(draft_body["transition"]),
            state_before=(
                ActivityState(draft_body["stateBefore"])
                if draft_body.get("stateBefore")
                else None
            ),
            state_after=(
                ActivityState(draft_body["stateAfter"])
                if draft_body.get("stateAfter")
                else None
            ),
            outcome_ref=outcome_ref,
            note=draft_body.get("note"),
            data=draft_body.get("data"),
        )
        ev = store.append_event(item_id, draft, int(body["expectedVersion"]))
        return ev.to_record()

    @app.get("/api/v1/items/{item_id}/outcomes/{schema_name}/{view}")
    async def get_outcome(
        item_id: str, schema_name: str, view: str, _agent: str = Depends(agent_of)
    ):
        seq = store.resolve_viewpoint(item_id, schema_name, view)
        outcome = store.get_outcome(item_id, seq)
        return Response(content=outcome.document, media_type="application/xml")

    @app.post("/api/v1/items/{item_id}/properties")
    async def set_property(item_id: str, body: dict, agent: str = Depends(agent_of)):
        ev = store.set_property(
            item_id, body["name"], body["value"], int(body["expectedVersion"]), agent=agent
        )
        return ev.to_record()

    @app.post("/api/v1/items/{item_id}/collections/{name}")
    async def modify_collection(
        item_id: str, name: str, body: dict, agent: str = Depends(agent_of)
    ):
        ev = store.modify_collection(
            item_id, name, body["change"], int(body["expectedVersion"]), agent=agent
        )
        return ev.to_record()

    # -- descriptions ---------------------------------------------------------------

    @app.post("/api/v1/descriptions")
    async def store_description(body: dict, agent: str = Depends(agent_of)):
        kind = body["kind"]
        name = body["name"]
        if kind == KIND_SCHEMA:
            content = schema_from_xml(body["document"])
        elif kind == KIND_WORKFLOW:
            content = workflow_from_xml(body["document"])
        elif kind == KIND_SCRIPT:
            content = body.get("source", body.get("document", ""))
        else:
            raise ValueError(f"unknown description kind {kind!r}")
        item_id, version = registry.store_description(kind, name, content, agent=agent)
        return {"descriptionItemId": item_id, "version": version}

    @app.get("/api/v1/descriptions/{item_id}/diff")
    async def diff_description(
        item_id: str, a: int, b: int, _agent: str = Depends(agent_of)
    ):
        name = store.snapshot(item_id).property_value("Name")
        if registry.description_kind(item_id) != KIND_WORKFLOW:
            raise errors.UnknownDescription(f"{item_id} is not a workflow description")
        return diff_report_to_dict(registry.diff_workflow(name, a, b))

    # registered after /diff so that literal segment wins over {version}
    @app.get("/api/v1/descriptions/{item_id}/{version}")
    async def get_description(item_id: str, version: str, _agent: str = Depends(agent_of)):
        ver = None if version in ("last", "latest") else int(version)
        kind, document, ver = registry.get_document(item_id, ver)
        name = store.snapshot(item_id).property_value("Name")
        return {"kind": kind, "name": name, "version": ver, "document": document}

    @app.post("/api/v1/descriptions/{item_id}/instantiate")
    async def instantiate(item_id: str, body: dict, agent: str = Depends(agent_of)):
        name = store.snapshot(item_id).property_value("Name")
        if registry.description_kind(item_id) != KIND_WORKFLOW:
            raise errors.UnknownDescription(f"{item_id} is not a workflow description")
        props = [
            Property(p["name"], p["value"], bool(p.get("mutable", True)))
            for p in body.get("properties", [])
        ]
        new_item = registry.instantiate(
            name, int(body["version"]), body["itemName"], props, agent=agent
        )
        return {"itemId": new_item}

    # -- jobs ---------------------------------------------------------------------------

    def job_dict(job: Job) -> dict:
        return {
            "itemId": job.item_id,
            "activityPath": job.activity_path,
            "transition": job.transition.value,
            "requiredRole": job.required_role,
        }

    @app.get("/api/v1/agents/{agent_id}/jobs")
    async def agent_jobs(agent_id: str, _agent: str = Depends(agent_of)):
        jobs = [job_dict(j) for j in engine.enabled_jobs(agent_id)]
        jobs.extend(allocation.escalation_jobs(engine.agent_roles(agent_id)))
        jobs.sort(key=lambda j: (j["itemId"], j["activityPath"], j["transition"]))
        return {"jobs": jobs}

    @app.post("/api/v1/jobs")
    async def run_job(body: dict, agent: str = Depends(agent_of)):
        job = Job(
            item_id=body["itemId"],
            activity_path=body["activityPath"],
            transition=Transition(body["transition"]),
            required_role=body.get("requiredRole", ""),
        )
        ev = engine.request_transition(agent, job, body.get("outcome"))
        return ev.to_record()

    # -- provenance ------------------------------------------------------------------------

    @app.get("/api/v1/provenance/{item_id}/audit")
    async def audit(item_id: str, _agent: str = Depends(agent_of)):
        rows = audit_trail(store, item_id)
        return {
            "rows": [
                {
                    "event": r.event.to_record(),
                    "agentName": r.agent_name,
                    "outcomeSummary": r.outcome_summary,
                }
                for r in rows
            ]
        }

    @app.get("/api/v1/provenance/{item_id}/opm")
    async def opm(
        item_id: str,
        _agent: str = Depends(agent_of),
        ids: Optional[str] = None,
        format: str = "xml",
    ):
        requested = {item_id}
        if ids:
            requested.update(i for i in ids.split(",") if i)
        graph = export_opm(store, requested, engine=engine)
        if format == "edges":
            return Response(content=edge_list_dump(graph), media_type="text/plain")
        return Response(content=serialize_opm(graph), media_type="application/xml")

    @app.get("/api/v1/provenance/{item_id}/stats")
    async def stats(item_id: str, request: Request, _agent: str = Depends(agent_of)):
        # `from`/`to` are reserved words, so read them off the raw query
        window_from = parse_instant(request.query_params["from"])
        window_to = parse_instant(request.query_params["to"])
        st = usage_stats(store, item_id, window_from, window_to)
        return {
            "resourceItemId": st.resource_item_id,
            "window": {"from": format_instant(st.window_from), "to": format_instant(st.window_to)},
            "activeMinutes": st.active_minutes,
            "completions": st.completions,
            "aborts": st.aborts,
            "perTaskType": [{"type": t, "count": c} for t, c in st.per_task_type],
        }

    @app.get("/api/v1/provenance/{item_id}/at")
    async def at(item_id: str, instant: str, _agent: str = Depends(agent_of)):
        snap = history_at(store, item_id, parse_instant(instant))
        return snapshot_to_dict(snap)

    @app.get("/api/v1/provenance/{item_id}/lineage/{seq}")
    async def lineage_of(item_id: str, seq: int, _agent: str = Depends(agent_of)):
        chain = lineage(store, item_id, seq)
        return {"chain": [{"itemId": i, "eventSeq": s} for i, s in chain]}

    # -- allocation --------------------------------------------------------------------------

    @app.post("/api/v1/allocation/plan")
    async def create_plan(body: dict, agent: str = Depends(agent_of)):
        tasks, resources, procedures = inputs_from_xml(body["inputs"])
        plan_item, plan = allocation.create_plan(
            tasks,
            resources,
            parse_instant(body["from"]),
            parse_instant(body["to"]),
            procedures,
            agent=agent,
        )
        return {"planItemId": plan_item, "plan": plan_to_dict(plan)}

    @app.get("/api/v1/allocation/plans/{plan_item_id}")
    async def get_plan(plan_item_id: str, _agent: str = Depends(agent_of)):
        plan = allocation.load_plan(plan_item_id)
        tasks, resources, procedures = allocation.load_inputs(plan_item_id)
        return {
            "planItemId": plan_item_id,
            "status": store.snapshot(plan_item_id).property_value("Status"),
            "plan": plan_to_dict(plan),
            "planXml": plan_to_xml(plan),
            "inputs": {
                "tasks": [
                    {
                        "id": t.id,
                        "type": t.task_type,
                        "requirements": t.requirements,
                        "duration": t.duration_minutes,
                        "earliestStart": format_instant(t.earliest_start),
                        "deadline": format_instant(t.deadline),
                        "priority": t.priority,
                    }
                    for t in tasks
                ],
                "resources": [
                    {
                        "itemId": r.item_id,
                        "name": r.name,
                        "category": r.category,
                        "capabilities": r.capabilities,
                        "maxHoursPerDay": r.calendar.max_hours_per_day,
                        "windowStart": r.calendar.window_start.isoformat(),
                        "windowEnd": r.calendar.window_end.isoformat(),
                        "holidays": [
                            {"from": lo.isoformat(), "to": hi.isoformat()}
                            for lo, hi in r.calendar.holidays
                        ],
                    }
                    for r in resources
                ],
                "procedures": [
                    {"id": p.id, "name": p.name, "taskIds": p.task_ids} for p in procedures
                ],
            },
        }

    @app.post("/api/v1/allocation/plans/{plan_item_id}/override")
    async def override(plan_item_id: str, body: dict, agent: str = Depends(agent_of)):
        plan = allocation.override(
            plan_item_id,
            body["taskId"],
            body["resourceItemId"],
            parse_instant(body["start"]),
            agent=agent,
        )
        return {"planItemId": plan_item_id, "plan": plan_to_dict(plan)}

    @app.post("/api/v1/allocation/plans/{plan_item_id}/activate")
    async def activate(plan_item_id: str, agent: str = Depends(agent_of)):
        allocation.activate(plan_item_id, agent=agent)
        return {"planItemId": plan_item_id, "status": "Active"}

    if console_dir is not None and console_dir.exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/console", StaticFiles(directory=console_dir, html=True), name="console")

    return app
