from .model import (
    Collection,
    CollectionSlot,
    Event,
    EventDraft,
    ItemSnapshot,
    Outcome,
    OutcomeRef,
    Property,
    Viewpoint,
    new_item_id,
    replay,
    snapshot_to_dict,
)
from .store import ItemStore

__all__ = [
    "Collection",
    "CollectionSlot",
    "Event",
    "EventDraft",
    "ItemSnapshot",
    "ItemStore",
    "Outcome",
    "OutcomeRef",
    "Property",
    "Viewpoint",
    "new_item_id",
    "replay",
    "snapshot_to_dict",
]
