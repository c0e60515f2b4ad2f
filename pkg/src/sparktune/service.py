"""Tuning service: task lifecycle over HTTP, with replayable persistence.

The service core (TuningService) is plain Python so tests can drive it
directly; the HTTP layer on top is a thin stdlib handler. Every mutation
is persisted through the task store as the task's creation record plus an
append-only observation log, and tasks are rebuilt on startup by replaying
that log through a fresh tuner. Suggestions are deterministic given the
task seed, so a replayed task continues exactly where it stopped.

Objectives are minimized internally; tasks created with "maximize": true
have observations negated at ingestion and report sign-corrected values.
"""
from __future__ import annotations

import json
import re
import threading
import uuid
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any, Sequence

from .gp import ContextVector
from .metrics import RuntimeMetrics
from .rules import RuleSet
from .space import SearchSpace
from .store import IntegrityError, TaskStore, valid_task_id
from .transfer import SimilarityModel, TaskRecord
from .tuner import Budget, ProtocolError, Tuner


class ServiceError(Exception):
    """Error with an HTTP status; the payload goes out as JSON."""

    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ServiceError(422, message)


class _TaskEntry:
    def __init__(self, task_id: str, tuner: Tuner, maximize: bool):
        self.task_id = task_id
        self.tuner = tuner
        self.maximize = maximize
        self.lock = threading.RLock()


class TuningService:
    """All task state and operations; the HTTP layer only does transport."""

    def __init__(
        self,
        store: TaskStore | None = None,
        space: SearchSpace | None = None,
        rules: RuleSet | None = None,
        history: Sequence[TaskRecord] | None = None,
        similarity: SimilarityModel | None = None,
        tau0: float | None = None,
        similarity_threshold: float | None = None,
        top_k: int | None = None,
    ):
        self.store = store
        self.space = space
        self.rules = rules
        self.history = list(history) if history else []
        self.similarity = similarity
        self.tau0 = tau0
        self.similarity_threshold = similarity_threshold
        self.top_k = top_k
        self._tasks: dict[str, _TaskEntry] = {}
        self._registry_lock = threading.Lock()
        if self.store is not None:
            self._load_from_store()

    # ------------------------------------------------------------ lifecycle

    def create_task(self, payload: Any) -> dict[str, Any]:
        _require(isinstance(payload, dict), "request body must be a JSON object")
        task_id = payload.get("task_id") or f"task-{uuid.uuid4().hex[:8]}"
        _require(valid_task_id(task_id), f"invalid task_id {task_id!r}")
        seed = payload.get("seed", 0)
        _require(isinstance(seed, int) and not isinstance(seed, bool), "seed must be an integer")
        _require(seed >= 0, "seed must be >= 0")
        maximize = payload.get("maximize", False)
        _require(isinstance(maximize, bool), "maximize must be a boolean")
        budget_doc = payload.get("budget")
        if budget_doc is None:
            budget = Budget()
        else:
            _require(isinstance(budget_doc, dict), "budget must be an object")
            try:
                budget = Budget.from_document(budget_doc)
            except (KeyError, TypeError, ValueError) as exc:
                raise ServiceError(422, f"invalid budget: {exc}") from exc
        use_transfer = payload.get("transfer", True)
        _require(isinstance(use_transfer, bool), "transfer must be a boolean")

        with self._registry_lock:
            _require(task_id not in self._tasks, f"task {task_id!r} already exists")
            tuner = self._build_tuner(seed, budget, use_transfer)
            entry = _TaskEntry(task_id, tuner, maximize)
            self._tasks[task_id] = entry
        if self.store is not None:
            self.store.save_record(
                task_id,
                {
                    "task_id": task_id,
                    "seed": seed,
                    "budget": budget.to_document(),
                    "maximize": maximize,
                    "transfer": use_transfer,
                },
            )
        return self._status_doc(entry)

    def _build_tuner(self, seed: int, budget: Budget, use_transfer: bool) -> Tuner:
        kwargs: dict[str, Any] = {}
        if self.tau0 is not None:
            kwargs["tau0"] = self.tau0
        if self.similarity_threshold is not None:
            kwargs["similarity_threshold"] = self.similarity_threshold
        if self.top_k is not None:
            kwargs["top_k"] = self.top_k
        return Tuner(
            space=self.space,
            rules=self.rules,
            budget=budget,
            history=self.history if use_transfer else None,
            similarity=self.similarity if use_transfer else None,
            seed=seed,
            **kwargs,
        )

    def _load_from_store(self) -> None:
        for task_id in self.store.list_tasks():
            record = self.store.load_record(task_id)
            budget = Budget.from_document(record["budget"])
            tuner = self._build_tuner(record["seed"], budget, record.get("transfer", True))
            entry = _TaskEntry(task_id, tuner, record.get("maximize", False))
            for doc in self.store.load_observations(task_id):
                suggestion = tuner.suggest()
                if suggestion.index != doc["index"]:
                    raise IntegrityError(
                        f"replay of {task_id} diverged at index {doc['index']}"
                    )
                self._ingest(entry, doc, persist=False)
            self._tasks[task_id] = entry

    # ------------------------------------------------------------ accessors

    def _entry(self, task_id: str) -> _TaskEntry:
        entry = self._tasks.get(task_id)
        if entry is None:
            raise ServiceError(404, f"no task {task_id!r}")
        return entry

    def list_tasks(self) -> list[dict[str, Any]]:
        out = []
        for task_id in sorted(self._tasks):
            entry = self._tasks[task_id]
            with entry.lock:
                out.append(self._summary_doc(entry))
        return out

    def get_task(self, task_id: str) -> dict[str, Any]:
        entry = self._entry(task_id)
        with entry.lock:
            return self._status_doc(entry)

    def get_suggestion(self, task_id: str) -> dict[str, Any]:
        entry = self._entry(task_id)
        with entry.lock:
            try:
                suggestion = entry.tuner.suggest()
            except ProtocolError as exc:
                raise ServiceError(409, str(exc)) from exc
            return suggestion.to_document()

    def post_observation(self, task_id: str, payload: Any) -> dict[str, Any]:
        entry = self._entry(task_id)
        _require(isinstance(payload, dict), "request body must be a JSON object")
        _require("index" in payload, "observation needs an index")
        index = payload["index"]
        _require(
            isinstance(index, int) and not isinstance(index, bool), "index must be an integer"
        )
        objective = payload.get("objective")
        _require(
            isinstance(objective, (int, float)) and not isinstance(objective, bool),
            "objective must be a number",
        )
        metrics_doc = payload.get("metrics")
        _require(
            metrics_doc is None or isinstance(metrics_doc, dict), "metrics must be an object"
        )
        context_doc = payload.get("context")
        _require(
            context_doc is None or isinstance(context_doc, dict), "context must be an object"
        )
        doc = {
            "index": index,
            "objective": float(objective),
            "metrics": metrics_doc,
            "context": context_doc,
        }
        with entry.lock:
            result = self._ingest(entry, doc, persist=True)
        return result

    def _ingest(self, entry: _TaskEntry, doc: dict[str, Any], persist: bool) -> dict[str, Any]:
        objective = doc["objective"]
        if entry.maximize:
            objective = -objective
        metrics = None
        if doc.get("metrics") is not None:
            try:
                metrics = RuntimeMetrics.from_document(doc["metrics"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ServiceError(422, f"invalid metrics: {exc}") from exc
        context = None
        if doc.get("context") is not None:
            try:
                context = ContextVector.from_document(doc["context"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ServiceError(422, f"invalid context: {exc}") from exc
        try:
            entry.tuner.observe(doc["index"], objective, metrics=metrics, context=context)
        except ProtocolError as exc:
            raise ServiceError(409, str(exc)) from exc
        if persist and self.store is not None:
            self.store.append_observation(entry.task_id, doc)
        return self._status_doc(entry)

    def stop_task(self, task_id: str) -> dict[str, Any]:
        entry = self._entry(task_id)
        with entry.lock:
            entry.tuner.stop()
            return self._status_doc(entry)

    def extend_budget(self, task_id: str, payload: Any) -> dict[str, Any]:
        entry = self._entry(task_id)
        _require(isinstance(payload, dict), "request body must be a JSON object")
        extra = payload.get("extra_search")
        _require(
            isinstance(extra, int) and not isinstance(extra, bool) and extra >= 1,
            "extra_search must be a positive integer",
        )
        with entry.lock:
            try:
                entry.tuner.extend_budget(extra)
            except ValueError as exc:
                raise ServiceError(422, str(exc)) from exc
            if self.store is not None:
                record = self.store.load_record(task_id)
                record["budget"] = entry.tuner.budget.to_document()
                self.store.save_record(task_id, record)
            return self._status_doc(entry)

    # ------------------------------------------------------------ rendering

    def _status_doc(self, entry: _TaskEntry) -> dict[str, Any]:
        doc = entry.tuner.to_status_document()
        doc["task_id"] = entry.task_id
        doc["maximize"] = entry.maximize
        if entry.maximize and doc.get("best"):
            doc["best"] = dict(doc["best"], objective=-doc["best"]["objective"])
        return doc

    def _summary_doc(self, entry: _TaskEntry) -> dict[str, Any]:
        full = self._status_doc(entry)
        return {
            key: full[key]
            for key in (
                "task_id",
                "status",
                "phase",
                "n_observed",
                "budget",
                "best",
                "improvement_ratio",
                "maximize",
            )
        }


# ------------------------------------------------------------------- HTTP


_ROUTES = [
    ("POST", re.compile(r"^/tasks$"), "create"),
    ("GET", re.compile(r"^/tasks$"), "list"),
    ("GET", re.compile(r"^/tasks/([^/]+)$"), "get"),
    ("GET", re.compile(r"^/tasks/([^/]+)/suggestion$"), "suggestion"),
    ("POST", re.compile(r"^/tasks/([^/]+)/observation$"), "observation"),
    ("POST", re.compile(r"^/tasks/([^/]+)/stop$"), "stop"),
    ("POST", re.compile(r"^/tasks/([^/]+)/budget$"), "budget"),
]

_CONTENT_TYPES = {
    ".html": "text/html",
    ".js": "application/javascript",
    ".css": "text/css",
    ".svg": "image/svg+xml",
    ".ico": "image/x-icon",
    ".json": "application/json",
}


def make_handler(service: TuningService, frontend_dir: Path | None, quiet: bool):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt: str, *args: Any) -> None:
            if not quiet:
                super().log_message(fmt, *args)

        def _send_json(self, status: int, doc: Any) -> None:
            body = json.dumps(doc, sort_keys=True).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _read_body(self) -> Any:
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length) if length else b""
            if not raw:
                return {}
            try:
                return json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ServiceError(422, f"request body is not valid JSON: {exc}") from exc

        def _dispatch(self, method: str) -> None:
            path = self.path.split("?", 1)[0]
            try:
                for verb, pattern, name in _ROUTES:
                    if verb != method:
                        continue
                    match = pattern.match(path)
                    if not match:
                        continue
                    self._handle_route(name, match)
                    return
                if method == "GET" and self._serve_static(path):
                    return
                self._send_json(404, {"error": f"no route for {method} {path}"})
            except ServiceError as exc:
                self._send_json(exc.status, {"error": exc.message})
            except BrokenPipeError:
                pass
            except Exception as exc:  # noqa: BLE001 - surface as a 500, keep serving
                self._send_json(500, {"error": f"internal error: {exc}"})

        def _handle_route(self, name: str, match: re.Match) -> None:
            if name == "create":
                self._send_json(201, service.create_task(self._read_body()))
            elif name == "list":
                self._send_json(200, {"tasks": service.list_tasks()})
            elif name == "get":
                self._send_json(200, service.get_task(match.group(1)))
            elif name == "suggestion":
                self._send_json(200, service.get_suggestion(match.group(1)))
            elif name == "observation":
                self._send_json(200, service.post_observation(match.group(1), self._read_body()))
            elif name == "stop":
                self._send_json(200, service.stop_task(match.group(1)))
            elif name == "budget":
                self._send_json(200, service.extend_budget(match.group(1), self._read_body()))

        def _serve_static(self, path: str) -> bool:
            if frontend_dir is None:
                return False
            rel = "index.html" if path in ("/", "") else path.lstrip("/")
            target = (frontend_dir / rel).resolve()
            try:
                target.relative_to(frontend_dir.resolve())
            except ValueError:
                return False
            if not target.is_file():
                return False
            body = target.read_bytes()
            ctype = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
            self.send_response(200)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)
            return True

        def do_GET(self) -> None:  # noqa: N802 - http.server API
            self._dispatch("GET")

        def do_POST(self) -> None:  # noqa: N802 - http.server API
            self._dispatch("POST")

    return Handler


def make_server(
    service: TuningService,
    host: str = "127.0.0.1",
    port: int = 8080,
    frontend_dir: str | Path | None = None,
    quiet: bool = False,
) -> ThreadingHTTPServer:
    directory = Path(frontend_dir) if frontend_dir else None
    handler = make_handler(service, directory, quiet)
    return ThreadingHTTPServer((host, port), handler)
