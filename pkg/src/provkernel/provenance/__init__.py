from .audit import (
    AuditRow,
    UsageStats,
    audit_trail,
    completed_executions,
    history_at,
    lineage,
    task_type_of,
    usage_stats,
)
from .opm import (
    OpmEdge,
    OpmGraph,
    OpmNode,
    agent_id,
    artifact_id,
    check_opm,
    deserialize_opm,
    edge_list_dump,
    export_opm,
    process_id,
    serialize_opm,
    topological_order,
)

__all__ = [
    "AuditRow",
    "OpmEdge",
    "OpmGraph",
    "OpmNode",
    "UsageStats",
    "agent_id",
    "artifact_id",
    "audit_trail",
    "check_opm",
    "completed_executions",
    "deserialize_opm",
    "edge_list_dump",
    "export_opm",
    "history_at",
    "lineage",
    "process_id",
    "serialize_opm",
    "task_type_of",
    "topological_order",
    "usage_stats",
]
