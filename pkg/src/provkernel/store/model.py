"""Domain types of the append-only item store.

An Item is identified by a UUID, carries name/value properties, an event log
(dense seq 0..version), XML outcomes keyed by event seq, viewpoints over those
outcomes, and collections linking it to other items. Everything observable is
derivable by replaying the event log from seq 0 — `replay` below is the
reference derivation used both by the live store and by the tests' oracle.
"""

from __future__ import annotations

import json
import uuid
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Optional

from ..lifecycle import ActivityState, Transition
from ..timeutil import format_instant, parse_instant

IMMUTABLE_PROPERTY_NAMES = ("Name", "Type")


def new_item_id() -> str:
    return str(uuid.uuid4())


@dataclass(frozen=True)
class Property:
    name: str
    value: str
    mutable: bool = True

    def __post_init__(self):
        if not self.name or len(self.name) > 128:
            raise ValueError("property name must be non-empty and at most 128 chars")


@dataclass(frozen=True)
class OutcomeRef:
    schema_name: str
    schema_version: int
    event_seq: int
    view: Optional[str] = None  # named viewpoint pinned at attach time


@dataclass(frozen=True)
class Event:
    seq: int
    timestamp: datetime
    agent: str
    activity_path: str
    transition: Transition
    state_before: Optional[ActivityState] = None
    state_after: Optional[ActivityState] = None
    outcome_ref: Optional[OutcomeRef] = None
    note: Optional[str] = None
    data: Optional[dict] = None  # transition payload; see module docstring

    def to_record(self) -> dict:
        ref = None
        if self.outcome_ref is not None:
            ref = {
                "schemaName": self.outcome_ref.schema_name,
                "schemaVersion": self.outcome_ref.schema_version,
                "eventSeq": self.outcome_ref.event_seq,
            }
            if self.outcome_ref.view is not None:
                ref["view"] = self.outcome_ref.view
        return {
            "seq": self.seq,
            "timestamp": format_instant(self.timestamp),
            "agent": self.agent,
            "activityPath": self.activity_path,
            "transition": self.transition.value,
            "stateBefore": self.state_before.value if self.state_before else None,
            "stateAfter": self.state_after.value if self.state_after else None,
            "outcomeRef": ref,
            "note": self.note,
            "data": self.data,
        }

    def to_line(self) -> str:
        return json.dumps(self.to_record(), separators=(",", ":"), sort_keys=False)

    @classmethod
    def from_record(cls, rec: dict) -> "Event":
        ref = rec.get("outcomeRef")
        outcome_ref = None
        if ref is not None:
            outcome_ref = OutcomeRef(
                schema_name=ref["schemaName"],
                schema_version=int(ref["schemaVersion"]),
                event_seq=int(ref["eventSeq"]),
                view=ref.get("view"),
            )
        sb = rec.get("stateBefore")
        sa = rec.get("stateAfter")
        return cls(
            seq=int(rec["seq"]),
            timestamp=parse_instant(rec["timestamp"]),
            agent=rec["agent"],
            activity_path=rec.get("activityPath", ""),
            transition=Transition(rec["transition"]),
            state_before=ActivityState(sb) if sb else None,
            state_after=ActivityState(sa) if sa else None,
            outcome_ref=outcome_ref,
            note=rec.get("note"),
            data=rec.get("data"),
        )

    @classmethod
    def from_line(cls, line: str) -> "Event":
        return cls.from_record(json.loads(line))


@dataclass(frozen=True)
class EventDraft:
    """An Event minus the store-assigned seq and timestamp."""

    agent: str
    activity_path: str
    transition: Transition
    state_before: Optional[ActivityState] = None
    state_after: Optional[ActivityState] = None
    outcome_ref: Optional[OutcomeRef] = None
    note: Optional[str] = None
    data: Optional[dict] = None


@dataclass(frozen=True)
class Outcome:
    item_id: str
    event_seq: int
    schema_name: str
    schema_version: int
    document: str


@dataclass(frozen=True)
class Viewpoint:
    item_id: str
    schema_name: str
    view_name: str
    event_seq: int


@dataclass
class CollectionSlot:
    slot_id: int
    target: str
    slot_properties: list[Property] = field(default_factory=list)
    tombstoned: bool = False


@dataclass
class Collection:
    item_id: str
    name: str
    members: list[CollectionSlot] = field(default_factory=list)

    def next_slot_id(self) -> int:
        return 1 + max((m.slot_id for m in self.members), default=-1)

    def live_members(self) -> list[CollectionSlot]:
        return [m for m in self.members if not m.tombstoned]


@dataclass
class ItemSnapshot:
    """Materialized view over the event log; version = last event seq."""

    item_id: str
    version: int = -1
    properties: dict[str, Property] = field(default_factory=dict)
    activity_states: dict[str, ActivityState] = field(default_factory=dict)
    # (schemaName, viewName) -> eventSeq, for pinned named views only
    named_views: dict[tuple[str, str], int] = field(default_factory=dict)
    # schemaName -> list of event seqs carrying that schema, ascending
    outcome_seqs: dict[str, list[int]] = field(default_factory=dict)
    collections: dict[str, Collection] = field(default_factory=dict)
    description_ref: Optional[tuple[str, int]] = None
    created_at: Optional[datetime] = None

    def property_value(self, name: str) -> Optional[str]:
        p = self.properties.get(name)
        return p.value if p else None

    def matches(self, pairs) -> bool:
        return all(self.property_value(n) == v for n, v in pairs)

    def copy(self) -> "ItemSnapshot":
        return replay(self.item_id, [], base=self)  # pragma: no cover - unused helper


def apply_event(snap: ItemSnapshot, ev: Event) -> None:
    """Fold one event into the snapshot. Shared by live store and replay."""
    snap.version = ev.seq
    t = ev.transition
    if t is Transition.CREATE:
        snap.created_at = ev.timestamp
        data = ev.data or {}
        for p in data.get("properties", []):
            snap.properties[p["name"]] = Property(
                name=p["name"], value=p["value"], mutable=bool(p.get("mutable", True))
            )
        ref = data.get("descriptionRef")
        if ref:
            snap.description_ref = (ref["itemId"], int(ref["version"]))
    elif t is Transition.PROPERTY_SET:
        data = ev.data or {}
        snap.properties[data["name"]] = Property(
            name=data["name"], value=data["value"], mutable=bool(data.get("mutable", True))
        )
    elif t is Transition.COLLECTION_CHANGE:
        data = ev.data or {}
        coll = snap.collections.setdefault(
            data["collection"], Collection(item_id=snap.item_id, name=data["collection"])
        )
        if data["change"] == "add":
            coll.members.append(
                CollectionSlot(
                    slot_id=int(data["slotId"]),
                    target=data["target"],
                    slot_properties=[
                        Property(p["name"], p["value"], bool(p.get("mutable", True)))
                        for p in data.get("slotProperties", [])
                    ],
                )
            )
        else:
            for m in coll.members:
                if m.slot_id == int(data["slotId"]):
                    m.tombstoned = True
    elif ev.state_after is not None:
        snap.activity_states[ev.activity_path] = ev.state_after

    if ev.outcome_ref is not None:
        seqs = snap.outcome_seqs.setdefault(ev.outcome_ref.schema_name, [])
        seqs.append(ev.seq)
        if ev.outcome_ref.view is not None:
            snap.named_views[(ev.outcome_ref.schema_name, ev.outcome_ref.view)] = ev.seq


def replay(item_id: str, events: list[Event], base: ItemSnapshot | None = None) -> ItemSnapshot:
    """Rebuild a snapshot by folding events in order; the reference derivation."""
    snap = base if base is not None else ItemSnapshot(item_id=item_id)
    for ev in events:
        apply_event(snap, ev)
    return snap


def snapshot_to_dict(snap: ItemSnapshot) -> dict[str, Any]:
    """JSON-friendly rendering used by the API and CLI."""
    return {
        "itemId": snap.item_id,
        "version": snap.version,
        "properties": [
            {"name": p.name, "value": p.value, "mutable": p.mutable}
            for p in sorted(snap.properties.values(), key=lambda p: p.name)
        ],
        "activityStates": {k: v.value for k, v in sorted(snap.activity_states.items())},
        "namedViews": [
            {"schemaName": s, "viewName": v, "eventSeq": seq}
            for (s, v), seq in sorted(snap.named_views.items())
        ],
        "outcomes": {k: list(v) for k, v in sorted(snap.outcome_seqs.items())},
        "collections": {
            name: [
                {
                    "slotId": m.slot_id,
                    "target": m.target,
                    "tombstoned": m.tombstoned,
                    "slotProperties": [
                        {"name": p.name, "value": p.value} for p in m.slot_properties
                    ],
                }
                for m in coll.members
            ]
            for name, coll in sorted(snap.collections.items())
        },
        "descriptionRef": (
            {"itemId": snap.description_ref[0], "version": snap.description_ref[1]}
            if snap.description_ref
            else None
        ),
    }
