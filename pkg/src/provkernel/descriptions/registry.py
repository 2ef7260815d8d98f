"""Runtime-modifiable descriptions stored as versioned Items.

Each description kind (schema, workflow, script) lives on one Item per name
(Type="Description", Kind=<kind>). Storing version n appends one event whose
outcome is the serialized content, pinned under viewpoint "n"; "last" tracks
the newest. Published versions are immutable — retrieval at any later time is
byte-identical.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from typing import Optional, Union

from .. import errors
from ..lifecycle import Transition
from ..store import EventDraft, ItemStore, OutcomeRef, Property
from .schema import (
    SchemaDescription,
    parse_xml,
    schema_from_xml,
    schema_to_xml,
    validate_outcome,
)
from .scripts import parse_script, serialize_script
from .workflowdef import (
    LATEST_AT_INSTANTIATION,
    WorkflowDescription,
    diff_workflows,
    DiffReport,
    validate_workflow_graph,
    workflow_from_xml,
    workflow_to_xml,
)

KIND_SCHEMA = "schema"
KIND_WORKFLOW = "workflow"
KIND_SCRIPT = "script"

# meta schema names used on description items' outcome refs
META_SCHEMAS = {
    KIND_SCHEMA: "schemaDescription",
    KIND_WORKFLOW: "workflowDescription",
    KIND_SCRIPT: "script",
}
META_PLAN = "allocationPlan"
META_INPUT = "allocationInput"


def script_to_xml(source: str) -> str:
    el = ET.Element("script")
    el.text = source
    return ET.tostring(el, encoding="unicode")


def script_from_xml(document: str) -> str:
    root = parse_xml(document)
    if root.tag != "script":
        raise errors.MalformedDocument(f"expected script, got {root.tag}")
    return root.text or ""


class DescriptionRegistry:
    def __init__(self, store: ItemStore, system_agent: str):
        self.store = store
        self.system_agent = system_agent
        # (name, version) -> parsed content; descriptions are immutable
        self._schema_cache: dict[tuple[str, int], SchemaDescription] = {}
        store.set_outcome_validator(self.validate_outcome_document)

    # -- outcome validation hook for the store ---------------------------------

    def validate_outcome_document(self, schema_name: str, schema_version: int, document: str):
        if schema_name in META_SCHEMAS.values() or schema_name in (META_PLAN, META_INPUT):
            return self._validate_builtin(schema_name, document)
        schema = self.get_schema(schema_name, schema_version)
        return validate_outcome(document, schema)

    def _validate_builtin(self, schema_name: str, document: str):
        try:
            if schema_name == "schemaDescription":
                parsed = schema_from_xml(document)
                return [f"{p}: {m}" for p, m in parsed.root.validate_structure()]
            if schema_name == "workflowDescription":
                return validate_workflow_graph(workflow_from_xml(document))
            if schema_name == "script":
                parse_script(script_from_xml(document))
                return []
            if schema_name in (META_PLAN, META_INPUT):
                root = parse_xml(document)
                if root.tag != schema_name:
                    return [("/", f"expected {schema_name} root")]
                return []
        except errors.KernelError as exc:
            return [("/", str(exc))]
        return [("/", f"unknown built-in schema {schema_name}")]

    # -- item lookup ------------------------------------------------------------

    def _find_item(self, kind: str, name: str) -> Optional[str]:
        found = self.store.query_items(
            [("Type", "Description"), ("Kind", kind), ("Name", name)]
        )
        return found[0] if found else None

    def _ensure_item(self, kind: str, name: str, agent: str) -> str:
        existing = self._find_item(kind, name)
        if existing:
            return existing
        return self.store.create_item(
            initial_properties=[
                Property("Name", name, mutable=False),
                Property("Type", "Description", mutable=False),
                Property("Kind", kind, mutable=False),
            ],
            agent=agent,
        )

    def description_kind(self, item_id: str) -> Optional[str]:
        snap = self.store.snapshot(item_id)
        if snap.property_value("Type") != "Description":
            return None
        return snap.property_value("Kind")

    def version_count(self, item_id: str, kind: str) -> int:
        snap = self.store.snapshot(item_id)
        return len(snap.outcome_seqs.get(META_SCHEMAS[kind], []))

    # -- storing ------------------------------------------------------------------

    def store_description(
        self,
        kind: str,
        name: str,
        content: Union[SchemaDescription, WorkflowDescription, str],
        agent: str | None = None,
    ) -> tuple[str, int]:
        """Validate, serialize, and append one immutable version.

        Returns (descriptionItemId, version).
        """
        agent = agent or self.system_agent
        if kind == KIND_SCHEMA:
            assert isinstance(content, SchemaDescription)
            structural = content.root.validate_structure()
            if structural:
                raise errors.ValidationFailed(
                    "schema tree invalid", detail=[f"{p}: {m}" for p, m in structural]
                )
        elif kind == KIND_WORKFLOW:
            assert isinstance(content, WorkflowDescription)
            violations = validate_workflow_graph(content)
            if violations:
                raise errors.ValidationFailed("workflow graph invalid", detail=violations)
        elif kind == KIND_SCRIPT:
            assert isinstance(content, str)
            parse_script(content)  # raises ParseError with position
        else:
            raise ValueError(f"unknown description kind {kind!r}")

        item_id = self._ensure_item(kind, name, agent)
        version = self.version_count(item_id, kind) + 1

        if kind == KIND_SCHEMA:
            content.name, content.version = name, version
            document = schema_to_xml(content)
        elif kind == KIND_WORKFLOW:
            content.name, content.version = name, version
            document = workflow_to_xml(content)
        else:
            document = script_to_xml(content)

        current = self.store.version(item_id)
        ev = self.store.append_event(
            item_id,
            EventDraft(
                agent=agent,
                activity_path="publish",
                transition=Transition.COMPLETE,
                outcome_ref=OutcomeRef(
                    schema_name=META_SCHEMAS[kind],
                    schema_version=1,
                    event_seq=current + 1,
                    view=str(version),
                ),
                note=f"version {version}",
            ),
            expected_version=current,
        )
        self.store.attach_outcome(item_id, ev.seq, document, view_name=str(version))
        return item_id, version

    # -- retrieval -----------------------------------------------------------------

    def _fetch_document(self, kind: str, name: str, version: int | None) -> tuple[str, int]:
        item_id = self._find_item(kind, name)
        if item_id is None:
            raise errors.UnknownDescription(f"{kind} '{name}'")
        return self._fetch_document_by_item(item_id, kind, version)

    def _fetch_document_by_item(
        self, item_id: str, kind: str, version: int | None
    ) -> tuple[str, int]:
        meta = META_SCHEMAS[kind]
        view = "last" if version is None else str(version)
        try:
            seq = self.store.resolve_viewpoint(item_id, meta, view)
        except errors.UnknownViewpoint as exc:
            raise errors.UnknownDescription(str(exc)) from exc
        document = self.store.get_outcome(item_id, seq).document
        if version is None:
            version = self.version_count(item_id, kind)
        return document, version

    def get_schema(self, name: str, version: int | None = None) -> SchemaDescription:
        if version is not None and (name, version) in self._schema_cache:
            return self._schema_cache[(name, version)]
        document, version = self._fetch_document(KIND_SCHEMA, name, version)
        schema = schema_from_xml(document)
        self._schema_cache[(name, version)] = schema
        return schema

    def get_workflow(self, name: str, version: int | None = None) -> WorkflowDescription:
        document, _ = self._fetch_document(KIND_WORKFLOW, name, version)
        return workflow_from_xml(document)

    def get_script(self, name: str, version: int | None = None) -> str:
        document, _ = self._fetch_document(KIND_SCRIPT, name, version)
        return script_from_xml(document)

    def get_document(self, item_id: str, version: int | None = None) -> tuple[str, str, int]:
        """(kind, raw document, version) for a description item id."""
        kind = self.description_kind(item_id)
        if kind is None:
            raise errors.UnknownDescription(item_id)
        document, version = self._fetch_document_by_item(item_id, kind, version)
        return kind, document, version

    def latest_version(self, kind: str, name: str) -> int:
        item_id = self._find_item(kind, name)
        if item_id is None:
            raise errors.UnknownDescription(f"{kind} '{name}'")
        count = self.version_count(item_id, kind)
        if count == 0:
            raise errors.UnknownDescription(f"{kind} '{name}' has no published version")
        return count

    # -- diff -------------------------------------------------------------------------

    def diff_workflow(self, name: str, version_a: int, version_b: int) -> DiffReport:
        return diff_workflows(
            self.get_workflow(name, version_a), self.get_workflow(name, version_b)
        )

    # -- instantiation ------------------------------------------------------------------

    def instantiate(
        self,
        workflow_name: str,
        version: int,
        item_name: str,
        initial_properties: list[Property] = (),
        agent: str | None = None,
        item_type: str = "Instance",
    ) -> str:
        """Create an Item executing workflow_name@version, pins included.

        Declared "latest-at-instantiation" outcome schemas are frozen to the
        concrete current version; later description stores never affect the
        new item.
        """
        agent = agent or self.system_agent
        wf_item = self._find_item(KIND_WORKFLOW, workflow_name)
        if wf_item is None:
            raise errors.UnknownDescription(f"workflow '{workflow_name}'")
        wf = self.get_workflow(workflow_name, version)  # raises UnknownDescription
        violations = validate_workflow_graph(wf)
        if violations:
            raise errors.ValidationFailed("workflow graph invalid", detail=violations)

        pins: dict[str, dict] = {}
        for node in wf.nodes:
            if node.kind != "Activity" or node.activity is None:
                continue
            schema_ref = node.activity.outcome_schema
            if schema_ref is None:
                continue
            schema_name, schema_version = schema_ref
            if schema_version == LATEST_AT_INSTANTIATION:
                schema_version = self.latest_version(KIND_SCHEMA, schema_name)
            else:
                self.get_schema(schema_name, int(schema_version))  # must exist
            pins[node.node_id] = {"schemaName": schema_name, "version": int(schema_version)}

        props = [
            Property("Name", item_name, mutable=False),
            Property("Type", item_type, mutable=False),
            Property("Workflow", workflow_name, mutable=False),
            Property("WorkflowVersion", str(version), mutable=False),
        ]
        props.extend(initial_properties)
        return self.store.create_item(
            description_ref=(wf_item, version),
            initial_properties=props,
            agent=agent,
            extra_create_data={"resolvedSchemaPins": pins},
        )
