"""Run manifests: one ``key: value`` line per field, values JSON-encoded."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone

from . import __version__

WALL_TIME_FIELDS = ("start_time", "end_time")


def now_iso():
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


@dataclass
class RunManifest:
    command: str
    params: dict
    config: dict
    seed: int | None
    scheme: str | None
    command_line: list
    code_version: str = __version__
    start_time: str = field(default_factory=now_iso)
    end_time: str | None = None
    status: str = "running"
    notes: dict = field(default_factory=dict)

    def write(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            for key, value in asdict(self).items():
                fh.write(f"{key}: {json.dumps(value, sort_keys=True)}\n")

    @classmethod
    def read(cls, path):
        data = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                key, _, value = line.rstrip("\n").partition(": ")
                data[key] = json.loads(value)
        return cls(**data)


def manifest_path(out_path):
    return f"{out_path}.manifest"
