"""JSON-lines run log shared by the replay harness and the analyzers."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import IO


@dataclass
class QueryLogEntry:
    query_id: int
    send_timestamp: float
    recv_timestamp: float
    request_body_bytes: int
    response_body_bytes: int
    upstream_status: int
    model_profile_name: str
    question: str | None = None
    answer: str | None = None
    error: str | None = None

    @property
    def latency(self) -> float:
        return self.recv_timestamp - self.send_timestamp


def append_entry(fh: IO[str], entry: QueryLogEntry):
    record = {k: v for k, v in asdict(entry).items() if v is not None}
    fh.write(json.dumps(record, sort_keys=True) + "\n")
    fh.flush()


def read_query_log(path: str | Path) -> list[QueryLogEntry]:
    known = set(QueryLogEntry.__dataclass_fields__)
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: line {lineno}: invalid JSON ({exc})") from exc
            entries.append(QueryLogEntry(**{k: v for k, v in obj.items() if k in known}))
    return entries
