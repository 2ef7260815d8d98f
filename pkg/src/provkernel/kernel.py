"""One-stop wiring of the kernel: store, descriptions, workflow execution,
provenance reads, and allocation, sharing a single storage root and a
bootstrap "system" agent."""

from __future__ import annotations

from datetime import datetime
from pathlib import Path
from typing import Callable, Optional

from .allocation import AllocationService
from .descriptions import DescriptionRegistry
from .store import ItemStore, Property
from .workflow import WorkflowEngine

SYSTEM_AGENT_NAME = "system"


class Kernel:
    def __init__(self, root: Path | str, clock: Optional[Callable[[], datetime]] = None):
        self.root = Path(root)
        self.store = ItemStore(self.root, clock=clock)
        self.system_agent = self._bootstrap_system_agent()
        self.registry = DescriptionRegistry(self.store, self.system_agent)
        self.engine = WorkflowEngine(self.store, self.registry)
        self.allocation = AllocationService(
            self.store, self.registry, self.engine, self.system_agent
        )

    def _bootstrap_system_agent(self) -> str:
        found = self.store.query_items([("Type", "Agent"), ("Name", SYSTEM_AGENT_NAME)])
        if found:
            return found[0]
        return self.store.create_item(
            initial_properties=[
                Property("Name", SYSTEM_AGENT_NAME, mutable=False),
                Property("Type", "Agent", mutable=False),
                Property("Kind", "Computational", mutable=False),
                Property("Roles", "system,administrator"),
            ]
        )

    def create_agent(self, name: str, roles: list[str], kind: str = "Human") -> str:
        return self.store.create_item(
            initial_properties=[
                Property("Name", name, mutable=False),
                Property("Type", "Agent", mutable=False),
                Property("Kind", kind, mutable=False),
                Property("Roles", ",".join(roles)),
            ],
            agent=self.system_agent,
        )
