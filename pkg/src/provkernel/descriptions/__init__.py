from .registry import (
    DescriptionRegistry,
    KIND_SCHEMA,
    KIND_SCRIPT,
    KIND_WORKFLOW,
    META_PLAN,
    META_SCHEMAS,
    script_from_xml,
    script_to_xml,
)
from .schema import (
    UNBOUNDED,
    SchemaDescription,
    SchemaElement,
    schema_from_xml,
    schema_to_xml,
    validate_outcome,
)
from .scripts import (
    ScriptContext,
    evaluate_script,
    parse_script,
    serialize_script,
    tokenize,
)
from .workflowdef import (
    LATEST_AT_INSTANTIATION,
    ActivityDescription,
    DiffReport,
    WorkflowDescription,
    WorkflowEdge,
    WorkflowNode,
    diff_report_to_dict,
    diff_workflows,
    validate_workflow_graph,
    workflow_from_xml,
    workflow_to_xml,
)

__all__ = [
    "ActivityDescription",
    "DescriptionRegistry",
    "DiffReport",
    "KIND_SCHEMA",
    "KIND_SCRIPT",
    "KIND_WORKFLOW",
    "LATEST_AT_INSTANTIATION",
    "META_PLAN",
    "META_SCHEMAS",
    "SchemaDescription",
    "SchemaElement",
    "ScriptContext",
    "UNBOUNDED",
    "WorkflowDescription",
    "WorkflowEdge",
    "WorkflowNode",
    "diff_report_to_dict",
    "diff_workflows",
    "evaluate_script",
    "parse_script",
    "schema_from_xml",
    "schema_to_xml",
    "script_from_xml",
    "script_to_xml",
    "serialize_script",
    "tokenize",
    "validate_outcome",
    "validate_workflow_graph",
    "workflow_from_xml",
    "workflow_to_xml",
]
