"""Durable task storage: checksummed records plus append-only logs.

Layout under the store root:

    tasks/<task_id>/record.json         task metadata, atomically replaced
    tasks/<task_id>/observations.jsonl  one observation per line, append-only

Every record and every log line carries a sha256 checksum of its canonical
JSON. A trailing log line without its newline is a torn write and is
dropped; any earlier malformed line, and any checksum mismatch, raises
IntegrityError.
"""
from __future__ import annotations

import hashlib
import json
import os
import re
import tempfile
from pathlib import Path
from typing import Any


class IntegrityError(RuntimeError):
    """Stored data is corrupt (bad checksum or malformed interior line)."""


_TASK_ID_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]{0,127}$")


def canonical_json(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def checksum(doc: Any) -> str:
    return hashlib.sha256(canonical_json(doc).encode()).hexdigest()


def valid_task_id(task_id: str) -> bool:
    return isinstance(task_id, str) and bool(_TASK_ID_RE.match(task_id))


class TaskStore:
    """File-backed store for tuning tasks."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        (self.root / "tasks").mkdir(parents=True, exist_ok=True)

    def task_dir(self, task_id: str) -> Path:
        if not valid_task_id(task_id):
            raise ValueError(f"invalid task id {task_id!r}")
        return self.root / "tasks" / task_id

    def has_task(self, task_id: str) -> bool:
        return (self.task_dir(task_id) / "record.json").exists()

    def list_tasks(self) -> list[str]:
        tasks_dir = self.root / "tasks"
        return sorted(
            p.name for p in tasks_dir.iterdir() if (p / "record.json").exists()
        )

    # -------------------------------------------------------------- records

    def save_record(self, task_id: str, doc: Any) -> None:
        """Atomically write the task record (tmp file + rename)."""
        directory = self.task_dir(task_id)
        directory.mkdir(parents=True, exist_ok=True)
        payload = {"checksum": checksum(doc), "record": doc}
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".record-", suffix=".tmp")
        try:
            with os.fdopen(fd, "w") as fh:
                json.dump(payload, fh)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, directory / "record.json")
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def load_record(self, task_id: str) -> Any:
        path = self.task_dir(task_id) / "record.json"
        if not path.exists():
            raise KeyError(task_id)
        try:
            payload = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise IntegrityError(f"record for {task_id} is not valid JSON") from exc
        if not isinstance(payload, dict) or "record" not in payload:
            raise IntegrityError(f"record for {task_id} has no payload")
        if checksum(payload["record"]) != payload.get("checksum"):
            raise IntegrityError(f"record checksum mismatch for {task_id}")
        return payload["record"]

    # --------------------------------------------------------- observations

    def append_observation(self, task_id: str, doc: Any) -> None:
        directory = self.task_dir(task_id)
        directory.mkdir(parents=True, exist_ok=True)
        line = json.dumps({"checksum": checksum(doc), "observation": doc})
        with open(directory / "observations.jsonl", "a") as fh:
            fh.write(line + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def load_observations(self, task_id: str) -> list[Any]:
        path = self.task_dir(task_id) / "observations.jsonl"
        if not path.exists():
            return []
        raw = path.read_text()
        segments = raw.split("\n")
        complete, torn = segments[:-1], segments[-1]
        del torn  # a trailing chunk without its newline never made it in full
        out = []
        for lineno, line in enumerate(complete, start=1):
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IntegrityError(
                    f"observation line {lineno} for {task_id} is not valid JSON"
                ) from exc
            if not isinstance(payload, dict) or "observation" not in payload:
                raise IntegrityError(
                    f"observation line {lineno} for {task_id} has no payload"
                )
            if checksum(payload["observation"]) != payload.get("checksum"):
                raise IntegrityError(
                    f"observation checksum mismatch on line {lineno} for {task_id}"
                )
            out.append(payload["observation"])
        return out

    def delete_task(self, task_id: str) -> None:
        directory = self.task_dir(task_id)
        if not directory.exists():
            return
        for child in directory.iterdir():
            child.unlink()
        directory.rmdir()
