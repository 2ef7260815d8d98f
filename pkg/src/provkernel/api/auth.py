"""Bearer tokens provisioned per agent Item.

The token store is a JSON file so the CLI and server share provisioning.
Every event the API writes is attributed to the authenticated agent — the
provenance model requires it.
"""

from __future__ import annotations

import json
import secrets
import threading
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Optional

from ..errors import AuthFailed
from ..timeutil import format_instant, parse_instant, utc_now

DEFAULT_TTL_HOURS = 24 * 30


@dataclass(frozen=True)
class ApiSession:
    token: str
    agent_item_id: str
    issued_at: datetime
    expires_at: datetime


class TokenStore:
    def __init__(self, path: Path | str):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._sessions: dict[str, ApiSession] = {}
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        data = json.loads(self.path.read_text(encoding="utf-8"))
        for token, rec in data.items():
            self._sessions[token] = ApiSession(
                token=token,
                agent_item_id=rec["agentItemId"],
                issued_at=parse_instant(rec["issuedAt"]),
                expires_at=parse_instant(rec["expiresAt"]),
            )

    def _save(self) -> None:
        data = {
            s.token: {
                "agentItemId": s.agent_item_id,
                "issuedAt": format_instant(s.issued_at),
                "expiresAt": format_instant(s.expires_at),
            }
            for s in self._sessions.values()
        }
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(data, indent=1), encoding="utf-8")

    def issue(self, agent_item_id: str, ttl_hours: float = DEFAULT_TTL_HOURS) -> ApiSession:
        now = utc_now()
        session = ApiSession(
            token=secrets.token_urlsafe(24),
            agent_item_id=agent_item_id,
            issued_at=now,
            expires_at=now + timedelta(hours=ttl_hours),
        )
        with self._lock:
            self._sessions[session.token] = session
            self._save()
        return session

    def authenticate(self, token: Optional[str]) -> str:
        """Returns the agent item id; expired and unknown tokens fail alike."""
        if not token:
            raise AuthFailed("missing bearer token")
        session = self._sessions.get(token)
        if session is None or session.expires_at <= utc_now():
            raise AuthFailed("invalid or expired token")
        return session.agent_item_id
