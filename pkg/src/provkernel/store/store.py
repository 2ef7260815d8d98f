"""Append-only, versioned item persistence.

Layout (logs are the sole source of truth, caches are rebuildable):

    {root}/items/{itemId}/events.log      one JSON object per line
    {root}/items/{itemId}/outcomes/{seq}.xml
    {root}/cache/index.json               snapshot/property-index cache

Writes to one item serialize through a per-item lock; the expectedVersion
check is atomic with the append. Reads run against immutable history and a
live snapshot maintained incrementally (always equal to replaying the log).
"""

from __future__ import annotations

import json
import threading
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Optional

from .. import errors
from ..lifecycle import ActivityState, Transition
from ..timeutil import format_instant, to_millis, utc_now
from .model import (
    Collection,
    Event,
    EventDraft,
    ItemSnapshot,
    Outcome,
    OutcomeRef,
    Property,
    apply_event,
    new_item_id,
    replay,
)

# validator(schema_name, schema_version, document) -> list of (path, message)
OutcomeValidator = Callable[[str, int, str], list]


class _ItemState:
    __slots__ = ("events", "snapshot", "lock")

    def __init__(self, item_id: str):
        self.events: list[Event] = []
        self.snapshot = ItemSnapshot(item_id=item_id)
        self.lock = threading.Lock()


class ItemStore:
    def __init__(self, root: Path | str, clock: Callable[[], datetime] | None = None):
        self.root = Path(root)
        self.items_dir = self.root / "items"
        self.cache_dir = self.root / "cache"
        self.items_dir.mkdir(parents=True, exist_ok=True)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self._clock = clock or utc_now
        self._items: dict[str, _ItemState] = {}
        self._registry_lock = threading.Lock()
        # (name, value) -> set of item ids; rebuilt from logs, kept incrementally
        self._property_index: dict[tuple[str, str], set[str]] = {}
        self._outcome_validator: Optional[OutcomeValidator] = None
        self._load_all()

    # -- wiring -----------------------------------------------------------

    def set_outcome_validator(self, validator: OutcomeValidator) -> None:
        self._outcome_validator = validator

    # -- loading / recovery -------------------------------------------------

    def _load_all(self) -> None:
        for d in sorted(self.items_dir.iterdir()) if self.items_dir.exists() else []:
            if d.is_dir() and (d / "events.log").exists():
                self._load_item(d.name)

    def _load_item(self, item_id: str) -> _ItemState:
        state = _ItemState(item_id)
        log = self.items_dir / item_id / "events.log"
        with open(log, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    ev = Event.from_line(line)
                except (json.JSONDecodeError, KeyError, ValueError):
                    break  # torn final write; everything before it is intact
                state.events.append(ev)
                apply_event(state.snapshot, ev)
        self._items[item_id] = state
        self._index_item(state.snapshot)
        return state

    def _index_item(self, snap: ItemSnapshot) -> None:
        for p in snap.properties.values():
            self._property_index.setdefault((p.name, p.value), set()).add(snap.item_id)

    def _reindex_property(self, item_id: str, name: str, old: Optional[str], new: str) -> None:
        if old is not None:
            bucket = self._property_index.get((name, old))
            if bucket:
                bucket.discard(item_id)
        self._property_index.setdefault((name, new), set()).add(item_id)

    def save_caches(self) -> None:
        """Write the rebuildable snapshot/index cache (advisory only)."""
        data = {
            "versions": {i: s.snapshot.version for i, s in self._items.items()},
            "savedAt": format_instant(utc_now()),
        }
        (self.cache_dir / "index.json").write_text(json.dumps(data, indent=1), encoding="utf-8")

    # -- internals -----------------------------------------------------------

    def _state(self, item_id: str) -> _ItemState:
        state = self._items.get(item_id)
        if state is None:
            raise errors.UnknownItem(item_id)
        return state

    def _next_timestamp(self, state: _ItemState) -> datetime:
        now = to_millis(self._clock().astimezone(timezone.utc))
        if state.events and now < state.events[-1].timestamp:
            now = state.events[-1].timestamp  # monotonic within item
        return now

    def _write_event(self, state: _ItemState, ev: Event) -> None:
        item_dir = self.items_dir / state.snapshot.item_id
        item_dir.mkdir(parents=True, exist_ok=True)
        with open(item_dir / "events.log", "a", encoding="utf-8") as fh:
            fh.write(ev.to_line() + "\n")
            fh.flush()
        state.events.append(ev)
        apply_event(state.snapshot, ev)

    def _append_locked(self, state: _ItemState, draft: EventDraft, expected_version: int) -> Event:
        if state.snapshot.version != expected_version:
            raise errors.VersionConflict(
                f"expected version {expected_version}, item is at {state.snapshot.version}"
            )
        ev = Event(
            seq=expected_version + 1,
            timestamp=self._next_timestamp(state),
            agent=draft.agent,
            activity_path=draft.activity_path,
            transition=draft.transition,
            state_before=draft.state_before,
            state_after=draft.state_after,
            outcome_ref=draft.outcome_ref,
            note=draft.note,
            data=draft.data,
        )
        self._write_event(state, ev)
        return ev

    # -- public operations ---------------------------------------------------

    def create_item(
        self,
        description_ref: Optional[tuple[str, int]] = None,
        initial_properties: Iterable[Property] = (),
        agent: str | None = None,
        extra_create_data: Optional[dict] = None,
        item_id: str | None = None,
    ) -> str:
        props = list(initial_properties)
        names = [p.name for p in props]
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise errors.DuplicatePropertyName(", ".join(sorted(dupes)))
        data: dict = {
            "properties": [
                {"name": p.name, "value": p.value, "mutable": p.mutable} for p in props
            ],
            "descriptionRef": None,
        }
        if description_ref is not None:
            ref_item, ref_version = description_ref
            if ref_item not in self._items:
                raise errors.UnknownDescription(f"{ref_item}@{ref_version}")
            data["descriptionRef"] = {"itemId": ref_item, "version": ref_version}
        if extra_create_data:
            data.update(extra_create_data)

        item_id = item_id or new_item_id()
        state = _ItemState(item_id)
        state.snapshot.item_id = item_id
        with self._registry_lock:
            self._items[item_id] = state
        with state.lock:
            ev = Event(
                seq=0,
                timestamp=self._next_timestamp(state),
                agent=agent or item_id,
                activity_path="",
                transition=Transition.CREATE,
                data=data,
            )
            self._write_event(state, ev)
        self._index_item(state.snapshot)
        return item_id

    def append_event(self, item_id: str, draft: EventDraft, expected_version: int) -> Event:
        state = self._state(item_id)
        with state.lock:
            old_props = {n: p.value for n, p in state.snapshot.properties.items()}
            ev = self._append_locked(state, draft, expected_version)
        if draft.transition is Transition.PROPERTY_SET and draft.data:
            name = draft.data["name"]
            self._reindex_property(item_id, name, old_props.get(name), draft.data["value"])
        return ev

    def attach_outcome(
        self, item_id: str, event_seq: int, document: str, view_name: str | None = None
    ) -> Outcome:
        state = self._state(item_id)
        with state.lock:
            if event_seq < 0 or event_seq > state.snapshot.version:
                raise errors.UnknownEvent(f"{item_id}#{event_seq}")
            ev = state.events[event_seq]
            if ev.outcome_ref is None:
                raise errors.UnknownEvent(
                    f"event {event_seq} declares no outcome schema"
                )
            out_path = self.items_dir / item_id / "outcomes" / f"{event_seq}.xml"
            if out_path.exists():
                raise errors.OutcomeAlreadyPresent(f"{item_id}#{event_seq}")
            ref = ev.outcome_ref
            if self._outcome_validator is not None:
                violations = self._outcome_validator(ref.schema_name, ref.schema_version, document)
                if violations:
                    raise errors.SchemaValidationFailed(
                        f"outcome invalid for {ref.schema_name}@{ref.schema_version}",
                        detail=violations,
                    )
            if view_name is not None and view_name != ref.view:
                raise errors.DuplicateViewName(
                    "view name must be declared on the event's outcomeRef"
                )
            out_path.parent.mkdir(parents=True, exist_ok=True)
            out_path.write_bytes(document.encode("utf-8"))
            return Outcome(
                item_id=item_id,
                event_seq=event_seq,
                schema_name=ref.schema_name,
                schema_version=ref.schema_version,
                document=document,
            )

    def get_outcome(self, item_id: str, event_seq: int) -> Outcome:
        state = self._state(item_id)
        if event_seq < 0 or event_seq > state.snapshot.version:
            raise errors.UnknownEvent(f"{item_id}#{event_seq}")
        ev = state.events[event_seq]
        path = self.items_dir / item_id / "outcomes" / f"{event_seq}.xml"
        if ev.outcome_ref is None or not path.exists():
            raise errors.UnknownOutcome(f"{item_id}#{event_seq}")
        return Outcome(
            item_id=item_id,
            event_seq=event_seq,
            schema_name=ev.outcome_ref.schema_name,
            schema_version=ev.outcome_ref.schema_version,
            document=path.read_bytes().decode("utf-8"),
        )

    def has_outcome(self, item_id: str, event_seq: int) -> bool:
        return (self.items_dir / item_id / "outcomes" / f"{event_seq}.xml").exists()

    def resolve_viewpoint(self, item_id: str, schema_name: str, view_name: str = "last") -> int:
        snap = self._state(item_id).snapshot
        if view_name == "last":
            seqs = [s for s in snap.outcome_seqs.get(schema_name, ()) if self.has_outcome(item_id, s)]
            if not seqs:
                raise errors.UnknownViewpoint(f"{schema_name}/last on {item_id}")
            return max(seqs)
        seq = snap.named_views.get((schema_name, view_name))
        if seq is None or not self.has_outcome(item_id, seq):
            raise errors.UnknownViewpoint(f"{schema_name}/{view_name} on {item_id}")
        return seq

    def set_property(
        self,
        item_id: str,
        name: str,
        value: str,
        expected_version: int,
        agent: str | None = None,
    ) -> Event:
        state = self._state(item_id)
        with state.lock:
            existing = state.snapshot.properties.get(name)
            if existing is not None and not existing.mutable:
                raise errors.ImmutablePropertyViolation(name)
            old = existing.value if existing else None
            draft = EventDraft(
                agent=agent or item_id,
                activity_path="",
                transition=Transition.PROPERTY_SET,
                data={"name": name, "value": value, "mutable": True},
            )
            ev = self._append_locked(state, draft, expected_version)
        self._reindex_property(item_id, name, old, value)
        return ev

    def query_items(self, pairs: Iterable[tuple[str, str]]) -> list[str]:
        pairs = list(pairs)
        if not pairs:
            return sorted(self._items.keys())
        candidate: Optional[set[str]] = None
        for key in pairs:
            bucket = self._property_index.get(key, set())
            candidate = bucket.copy() if candidate is None else candidate & bucket
            if not candidate:
                return []
        # index buckets may retain stale members after value changes; confirm
        return sorted(
            i for i in candidate if self._items[i].snapshot.matches(pairs)
        )

    def modify_collection(
        self,
        item_id: str,
        collection_name: str,
        change: dict,
        expected_version: int,
        agent: str | None = None,
    ) -> Event:
        """change: {"change": "add", "target": id, "slotProperties": [...]}
        or {"change": "remove", "slotId": n}."""
        state = self._state(item_id)
        with state.lock:
            coll = state.snapshot.collections.get(
                collection_name, Collection(item_id=item_id, name=collection_name)
            )
            if change["change"] == "add":
                target = change["target"]
                if target not in self._items:
                    raise errors.UnknownTarget(target)
                data = {
                    "collection": collection_name,
                    "change": "add",
                    "slotId": coll.next_slot_id(),
                    "target": target,
                    "slotProperties": change.get("slotProperties", []),
                }
            else:
                slot_id = int(change["slotId"])
                slot = next((m for m in coll.members if m.slot_id == slot_id), None)
                if slot is None:
                    raise errors.UnknownSlot(f"{collection_name}[{slot_id}]")
                if slot.tombstoned:
                    raise errors.SlotAlreadyTombstoned(f"{collection_name}[{slot_id}]")
                data = {"collection": collection_name, "change": "remove", "slotId": slot_id}
            draft = EventDraft(
                agent=agent or item_id,
                activity_path="",
                transition=Transition.COLLECTION_CHANGE,
                data=data,
            )
            return self._append_locked(state, draft, expected_version)

    def list_events(self, item_id: str, from_seq: int = 0, to_seq: int | None = None) -> list[Event]:
        state = self._state(item_id)
        last = state.snapshot.version
        if to_seq is None:
            to_seq = last
        if from_seq < 0 or from_seq > to_seq:
            raise ValueError("require 0 <= fromSeq <= toSeq")
        return list(state.events[from_seq : min(to_seq, last) + 1])

    # -- read model ------------------------------------------------------------

    def item_ids(self) -> list[str]:
        return sorted(self._items.keys())

    def exists(self, item_id: str) -> bool:
        return item_id in self._items

    def snapshot(self, item_id: str) -> ItemSnapshot:
        return self._state(item_id).snapshot

    def version(self, item_id: str) -> int:
        return self._state(item_id).snapshot.version

    def replayed_snapshot(self, item_id: str) -> ItemSnapshot:
        """Snapshot rebuilt from scratch; equals `snapshot` by construction."""
        state = self._state(item_id)
        return replay(item_id, state.events)
