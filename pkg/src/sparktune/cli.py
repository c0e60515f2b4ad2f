"""Command-line entry points.

    sparktune serve       run the tuning service over HTTP
    sparktune benchmark   compare strategies on synthetic workloads
    sparktune lint-rules  parse and summarize a rule document
    sparktune replay      rebuild a stored task and print its trajectory

Environment overrides: SPARKTUNE_STORE (store path), SPARKTUNE_TAU0,
SPARKTUNE_SIM_THRESHOLD, SPARKTUNE_TOP_K.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .rules import RuleParseError, load_ruleset
from .simulator import make_workload
from .store import TaskStore
from .tuner import Budget


def _env_float(name: str) -> float | None:
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return None
    try:
        return float(raw)
    except ValueError:
        raise SystemExit(f"{name} must be a number, got {raw!r}")


def _env_int(name: str) -> int | None:
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"{name} must be an integer, got {raw!r}")


def _add_serve(subparsers) -> None:
    p = subparsers.add_parser("serve", help="run the tuning service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--store", default=None, help="task store directory")
    p.add_argument("--frontend", default=None, help="directory of static dashboard files")
    p.add_argument("--quiet", action="store_true", help="suppress request logging")


def _add_benchmark(subparsers) -> None:
    p = subparsers.add_parser("benchmark", help="compare tuning strategies")
    p.add_argument("--manifest", required=True, help="JSON manifest of workloads")
    p.add_argument(
        "--strategies",
        default="expert_bo,vanilla_bo",
        help="comma-separated strategy names",
    )
    p.add_argument("--seeds", default="0,1,2", help="comma-separated seeds")
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument(
        "--milestones", default="5,10,20", help="iterations summarized on stdout"
    )


def _add_lint(subparsers) -> None:
    p = subparsers.add_parser("lint-rules", help="validate a rule document")
    p.add_argument("--file", required=True, help="rule JSON document")


def _add_replay(subparsers) -> None:
    p = subparsers.add_parser("replay", help="replay a stored task")
    p.add_argument("--task-id", required=True)
    p.add_argument("--store", default=None, help="task store directory")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="sparktune")
    subparsers = parser.add_subparsers(dest="command", required=True)
    _add_serve(subparsers)
    _add_benchmark(subparsers)
    _add_lint(subparsers)
    _add_replay(subparsers)
    args = parser.parse_args(argv)
    if args.command == "serve":
        return _cmd_serve(args)
    if args.command == "benchmark":
        return _cmd_benchmark(args)
    if args.command == "lint-rules":
        return _cmd_lint(args)
    return _cmd_replay(args)


def _store_from(args) -> TaskStore | None:
    path = getattr(args, "store", None) or os.environ.get("SPARKTUNE_STORE")
    return TaskStore(path) if path else None


def _cmd_serve(args) -> int:
    from .service import TuningService, make_server

    service = TuningService(
        store=_store_from(args),
        tau0=_env_float("SPARKTUNE_TAU0"),
        similarity_threshold=_env_float("SPARKTUNE_SIM_THRESHOLD"),
        top_k=_env_int("SPARKTUNE_TOP_K"),
    )
    server = make_server(
        service,
        host=args.host,
        port=args.port,
        frontend_dir=args.frontend,
        quiet=args.quiet,
    )
    host, port = server.server_address[:2]
    print(f"serving on http://{host}:{port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def _cmd_benchmark(args) -> int:
    from .benchmark import (
        STRATEGIES,
        run_benchmark,
        summarize,
        synthesize_history,
        train_similarity_from_records,
        write_csv,
    )

    manifest = json.loads(Path(args.manifest).read_text())
    entries = manifest["workloads"] if isinstance(manifest, dict) else manifest
    workloads = [
        make_workload(
            seed=int(e["seed"]),
            family=e.get("family"),
            base_data_size=e.get("base_data_size"),
            noise=float(e.get("noise", 0.01)),
        )
        for e in entries
    ]
    budget = None
    if isinstance(manifest, dict) and manifest.get("budget"):
        budget = Budget.from_document(manifest["budget"])
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    unknown = [s for s in strategies if s not in STRATEGIES]
    if unknown:
        raise SystemExit(f"unknown strategies: {', '.join(unknown)}")
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]

    history = None
    similarity = None
    if any(s.startswith("transfer") for s in strategies):
        from .benchmark import related_history_for

        related = []
        for i, workload in enumerate(workloads):
            related.extend(related_history_for(workload, n_tasks=3, seed=i + 1))
        history = synthesize_history(related, seed=0)
        similarity = train_similarity_from_records(history)

    rows = run_benchmark(
        workloads, strategies, seeds, budget=budget, history=history, similarity=similarity
    )
    write_csv(rows, args.out)
    milestones = [int(m) for m in args.milestones.split(",") if m.strip()]
    for entry in summarize(rows, milestones):
        parts = [f"{entry['strategy']:<14}"]
        for m in milestones:
            value = entry.get(f"best_at_{m}")
            parts.append(f"best@{m}={value:.4f}" if value is not None else f"best@{m}=n/a")
        print("  ".join(parts))
    print(f"wrote {args.out}")
    return 0


def _cmd_lint(args) -> int:
    try:
        ruleset = load_ruleset(args.file)
    except (OSError, json.JSONDecodeError, RuleParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    by_param: dict[str, int] = {}
    for rule in ruleset:
        by_param[rule.parameter] = by_param.get(rule.parameter, 0) + 1
    print(f"{len(ruleset)} rules over {len(by_param)} parameters")
    for name in sorted(by_param):
        print(f"  {by_param[name]:>3}  {name}")
    return 0


def _cmd_replay(args) -> int:
    from .service import TuningService

    store = _store_from(args)
    if store is None:
        raise SystemExit("a store is required: pass --store or set SPARKTUNE_STORE")
    if not store.has_task(args.task_id):
        raise SystemExit(f"no task {args.task_id!r} in {store.root}")
    service = TuningService(store=store)
    doc = service.get_task(args.task_id)
    print(f"task {doc['task_id']}: {doc['status']}, {doc['n_observed']} observations")
    best = doc.get("best")
    if best:
        print(f"best objective: {best['objective']:.6g}")
        for key, value in sorted(best["config"].items()):
            print(f"  {key} = {value}")
    ratio = doc.get("improvement_ratio")
    if ratio is not None:
        print(f"improvement ratio vs defaults: {ratio:.4f}")
    for entry in doc.get("trace", []):
        print(
            "T={iteration:<3} w_e={w_expert:.4f} w_s={w_surrogate:.4f} "
            "p_e={p_expert:.4f} draw={draw:.4f} {rationale}".format(**entry)
        )
    return 0
