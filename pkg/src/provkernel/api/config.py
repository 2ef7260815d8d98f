"""Service configuration: one JSON file, CRISTAL_-prefixed env overrides."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

ENV_PREFIX = "CRISTAL_"

DEFAULT_PORT = 8470


@dataclass
class ServiceConfig:
    storage_root: Path
    port: int = DEFAULT_PORT
    token_store: Path | None = None

    @property
    def token_store_path(self) -> Path:
        return self.token_store or (self.storage_root / "tokens.json")


def load_config(path: Path | str | None = None) -> ServiceConfig:
    """File first (if any), environment wins field by field."""
    data: dict = {}
    env_path = os.environ.get(ENV_PREFIX + "CONFIG")
    path = path or env_path
    if path:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    storage = os.environ.get(ENV_PREFIX + "STORAGE_ROOT", data.get("storageRoot", "./data"))
    port = int(os.environ.get(ENV_PREFIX + "PORT", data.get("port", DEFAULT_PORT)))
    token = os.environ.get(ENV_PREFIX + "TOKEN_STORE", data.get("tokenStore"))
    return ServiceConfig(
        storage_root=Path(storage),
        port=port,
        token_store=Path(token) if token else None,
    )
