"""Workspace manifest and content-hash stage cache."""

from __future__ import annotations

import contextlib
import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Mapping, Optional

from . import __version__

MANIFEST = "manifest.json"
PARTIAL = ".partial"
ERROR_REPORT = "error.json"


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def config_digest(subset: Mapping) -> str:
    return hashlib.sha256(json.dumps(subset, sort_keys=True).encode()).hexdigest()


@contextlib.contextmanager
def atomic_path(path):
    """Yield a temp path beside ``path``; rename it into place on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def write_bytes_atomic(path, data: bytes) -> None:
    with atomic_path(path) as tmp:
        tmp.write_bytes(data)


@dataclass
class StageSpec:
    """One cacheable unit of work.

    ``inputs`` maps a logical name to a file path; ``outputs`` are paths
    relative to the workspace root.
    """

    key: str
    inputs: dict[str, Path]
    config: dict
    outputs: list[str]
    run: Callable[[], None]
    producers: dict[str, str] = field(default_factory=dict)


class Workspace:
    def __init__(self, root):
        self.root = Path(root)
        self.manifest_path = self.root / MANIFEST
        self.stages: dict[str, dict] = {}
        self.extra: dict = {}
        if self.manifest_path.is_file():
            data = json.loads(self.manifest_path.read_text(encoding="utf-8"))
            self.stages = data.get("stages", {})
            self.extra = {k: v for k, v in data.items() if k not in ("stages", "updated_at")}

    def path(self, rel: str) -> Path:
        return self.root / rel

    def record_for(self, spec: StageSpec) -> Optional[dict]:
        """Manifest entry the stage would have now, or None if an input is missing."""
        digests = {}
        for name, p in sorted(spec.inputs.items()):
            if not Path(p).is_file():
                return None
            digests[name] = file_digest(p)
        return {"inputs": digests, "config": config_digest(spec.config)}

    def is_cached(self, spec: StageSpec, record: dict) -> bool:
        old = self.stages.get(spec.key)
        if not old or old.get("inputs") != record["inputs"] or old.get("config") != record["config"]:
            return False
        outs = old.get("outputs", {})
        if sorted(outs) != sorted(spec.outputs):
            return False
        for rel, digest in outs.items():
            p = self.path(rel)
            if not p.is_file() or file_digest(p) != digest:
                return False
        return True

    def finish(self, spec: StageSpec, record: dict) -> dict:
        record = dict(record)
        record["outputs"] = {rel: file_digest(self.path(rel)) for rel in sorted(spec.outputs)}
        self.stages[spec.key] = record
        return record

    def save(self, config_snapshot: Optional[dict] = None) -> None:
        data = dict(self.extra)
        data["tool_version"] = __version__
        if config_snapshot is not None:
            data["config"] = config_snapshot
        data["stages"] = dict(sorted(self.stages.items()))
        data["updated_at"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
        self.root.mkdir(parents=True, exist_ok=True)
        write_bytes_atomic(self.manifest_path, (json.dumps(data, indent=2, sort_keys=True) + "\n").encode())

    def mark_partial(self, report: dict) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        write_bytes_atomic(self.path(PARTIAL), (report["stage"] + "\n").encode())
        write_bytes_atomic(self.path(ERROR_REPORT), (json.dumps(report, indent=2, sort_keys=True) + "\n").encode())

    def clear_partial(self) -> None:
        for name in (PARTIAL, ERROR_REPORT):
            with contextlib.suppress(FileNotFoundError):
                self.path(name).unlink()
