"""Read-side provenance services over the immutable event logs."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from typing import Optional

from .. import errors
from ..lifecycle import Transition
from ..store import Event, ItemSnapshot, ItemStore, replay


@dataclass(frozen=True)
class AuditRow:
    event: Event
    agent_name: str
    outcome_summary: Optional[str]  # "schema@version #seq" when present


def audit_trail(store: ItemStore, item_id: str) -> list[AuditRow]:
    """Every event in seq order, joined with agent names — nothing filtered."""
    rows = []
    for ev in store.list_events(item_id):
        agent_name = ev.agent
        if store.exists(ev.agent):
            agent_name = store.snapshot(ev.agent).property_value("Name") or ev.agent
        summary = None
        if ev.outcome_ref is not None:
            ref = ev.outcome_ref
            summary = f"{ref.schema_name}@{ref.schema_version} #{ev.seq}"
        rows.append(AuditRow(ev, agent_name, summary))
    return rows


def history_at(store: ItemStore, item_id: str, instant: datetime) -> ItemSnapshot:
    """Replay of all events with timestamp <= instant."""
    events = store.list_events(item_id)
    if not events or instant < events[0].timestamp:
        raise errors.BeforeCreation(f"{item_id} did not exist at {instant.isoformat()}")
    prefix = [ev for ev in events if ev.timestamp <= instant]
    return replay(item_id, prefix)


@dataclass
class UsageStats:
    resource_item_id: str
    window_from: datetime
    window_to: datetime
    active_minutes: float = 0.0
    completions: int = 0
    aborts: int = 0
    per_task_type: list[tuple[str, int]] = field(default_factory=list)


def _attributed(store: ItemStore, item_id: str, ev: Event, resource_item_id: str) -> bool:
    if ev.agent == resource_item_id:
        return True
    assigned = store.snapshot(item_id).property_value(f"AssignedResource:{ev.activity_path}")
    return assigned == resource_item_id


def task_type_of(store: ItemStore, item_id: str, activity_path: str) -> str:
    return (
        store.snapshot(item_id).property_value(f"TaskType:{activity_path}")
        or activity_path
    )


def usage_stats(
    store: ItemStore,
    resource_item_id: str,
    window_from: datetime,
    window_to: datetime,
) -> UsageStats:
    """Lifecycle analysis of one resource across every item's log.

    activeDuration sums Start->(Complete|Abort) gaps clipped to the window;
    an unmatched Start contributes up to the window end. Terminal events are
    counted when their own timestamp falls inside the window.
    """
    if not store.exists(resource_item_id):
        raise errors.UnknownItem(resource_item_id)
    if window_from > window_to:
        raise ValueError("window.from must be <= window.to")
    stats = UsageStats(resource_item_id, window_from, window_to)
    type_counts: dict[str, int] = {}

    for item_id in store.item_ids():
        # path -> (startedAt, start was attributed to this resource)
        open_starts: dict[str, tuple[datetime, bool]] = {}
        for ev in store.list_events(item_id):
            if ev.transition is Transition.START:
                open_starts[ev.activity_path] = (
                    ev.timestamp,
                    _attributed(store, item_id, ev, resource_item_id),
                )
            elif ev.transition in (Transition.COMPLETE, Transition.ABORT):
                opened = open_starts.pop(ev.activity_path, None)
                if opened is None:
                    continue
                started, start_mine = opened
                if not (start_mine or _attributed(store, item_id, ev, resource_item_id)):
                    continue
                lo = max(started, window_from)
                hi = min(ev.timestamp, window_to)
                if hi > lo:
                    stats.active_minutes += (hi - lo).total_seconds() / 60.0
                if window_from <= ev.timestamp <= window_to:
                    if ev.transition is Transition.COMPLETE:
                        stats.completions += 1
                        t = task_type_of(store, item_id, ev.activity_path)
                        type_counts[t] = type_counts.get(t, 0) + 1
                    else:
                        stats.aborts += 1
        for started, start_mine in open_starts.values():
            if not start_mine:
                continue
            lo = max(started, window_from)
            if window_to > lo:
                stats.active_minutes += (window_to - lo).total_seconds() / 60.0

    stats.per_task_type = sorted(type_counts.items())
    return stats


def completed_executions(store: ItemStore, resource_item_id: str) -> list[tuple[str, str, datetime]]:
    """(taskType, itemId, completedAt) for every Complete attributed to the
    resource — the raw material for relevance scoring."""
    out = []
    for item_id in store.item_ids():
        for ev in store.list_events(item_id):
            if ev.transition is Transition.COMPLETE and _attributed(
                store, item_id, ev, resource_item_id
            ):
                out.append((task_type_of(store, item_id, ev.activity_path), item_id, ev.timestamp))
    return out


def lineage(store: ItemStore, item_id: str, event_seq: int) -> list[tuple[str, int]]:
    """Derivation chain of one outcome, depth-first, each node once.

    Parents of (item, seq): the previous outcome of the same schema on the
    same item, then every outcome the generating activity read at Start time.
    """
    if not store.has_outcome(item_id, event_seq):
        raise errors.UnknownOutcome(f"{item_id}#{event_seq}")

    def parents(node: tuple[str, int]) -> list[tuple[str, int]]:
        nid, seq = node
        events = store.list_events(nid)
        ev = events[seq]
        out: list[tuple[str, int]] = []
        if ev.outcome_ref is not None:
            prior = [
                s
                for s in store.snapshot(nid).outcome_seqs.get(ev.outcome_ref.schema_name, ())
                if s < seq and store.has_outcome(nid, s)
            ]
            if prior:
                out.append((nid, max(prior)))
        # the Start event of the span this Complete closed carries the reads
        if ev.transition is Transition.COMPLETE:
            for prev in reversed(events[:seq]):
                if prev.activity_path != ev.activity_path:
                    continue
                if prev.transition is Transition.START:
                    for read in (prev.data or {}).get("reads", []):
                        ref = (read["itemId"], int(read["eventSeq"]))
                        if store.exists(ref[0]) and store.has_outcome(*ref):
                            out.append(ref)
                    break
                if prev.transition in (Transition.COMPLETE, Transition.ABORT):
                    break
        return out

    chain: list[tuple[str, int]] = []
    seen: set[tuple[str, int]] = set()
    stack = [(item_id, event_seq)]
    while stack:
        node = stack.pop()
        if node in seen:
            continue
        seen.add(node)
        chain.append(node)
        stack.extend(reversed(parents(node)))
    return chain
