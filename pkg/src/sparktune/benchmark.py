"""Strategy benchmarks on synthetic workloads.

Strategies share the same evaluation budget and default runs so curves are
directly comparable:

    expert_bo     rules-guided initialization and arbitrated search
    vanilla_bo    random initialization, expected-improvement search
    rules_only    repeated rule application, no surrogate
    transfer_all  expert_bo plus an ensemble over similar history tasks
    transfer_one  transfer_all restricted to the single best history task
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .acquisition import generate_candidates, select_by_ei
from .gp import ContextVector, fit
from .rules import RuleSet, apply_rules, default_rules
from .simulator import SyntheticWorkload, make_related_workload, observe
from .space import default_configurations, sample_uniform
from .transfer import (
    SimilarityModel,
    TaskRecord,
    record_task,
    train_similarity_model,
)
from .tuner import Budget, Tuner

STRATEGIES = ("expert_bo", "vanilla_bo", "rules_only", "transfer_all", "transfer_one")


@dataclass(frozen=True)
class TrajectoryPoint:
    workload_id: str
    strategy: str
    seed: int
    iteration: int
    objective: float
    best_so_far: float


def _trajectory(
    workload: SyntheticWorkload, strategy: str, seed: int, objectives: Sequence[float]
) -> list[TrajectoryPoint]:
    points = []
    best = np.inf
    for i, y in enumerate(objectives, start=1):
        best = min(best, y)
        points.append(
            TrajectoryPoint(workload.workload_id, strategy, seed, i, float(y), float(best))
        )
    return points


def run_strategy(
    workload: SyntheticWorkload,
    strategy: str,
    seed: int,
    budget: Budget | None = None,
    history: Sequence[TaskRecord] | None = None,
    similarity: SimilarityModel | None = None,
) -> list[TrajectoryPoint]:
    """One tuning run; returns the per-iteration trajectory."""
    if budget is None:
        budget = Budget()
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    noise_rng = np.random.default_rng(seed + 1_000_003)
    context = ContextVector(workload.base_data_size)
    if strategy == "vanilla_bo":
        objectives = _run_vanilla(workload, seed, budget, context, noise_rng)
    elif strategy == "rules_only":
        objectives = _run_rules_only(workload, budget, context, noise_rng)
    else:
        top_k = 1 if strategy == "transfer_one" else None
        use_history = strategy in ("transfer_all", "transfer_one")
        tuner = Tuner(
            space=workload.space,
            budget=budget,
            history=history if use_history else None,
            similarity=similarity if use_history else None,
            seed=seed,
            **({"top_k": top_k} if top_k else {}),
        )
        objectives = []
        while not tuner.finished:
            suggestion = tuner.suggest()
            obs = observe(workload, suggestion.config, context, rng=noise_rng)
            tuner.observe(
                suggestion.index, obs.objective, metrics=obs.metrics, context=context
            )
            objectives.append(obs.objective)
    return _trajectory(workload, strategy, seed, objectives)


def _run_vanilla(
    workload: SyntheticWorkload,
    seed: int,
    budget: Budget,
    context: ContextVector,
    noise_rng: np.random.Generator,
) -> list[float]:
    """Defaults, uniform random init, then pure expected-improvement search."""
    rng = np.random.default_rng(seed)
    space = workload.space
    defaults = default_configurations(space)
    observations = []
    objectives: list[float] = []

    def run(config) -> None:
        obs = observe(workload, config, context, rng=noise_rng)
        observations.append(obs)
        objectives.append(obs.objective)

    for i in range(budget.defaults):
        run(defaults[i % len(defaults)])
    for _ in range(budget.init):
        run(sample_uniform(space, rng))
    for _ in range(budget.search):
        model = fit(observations, space)
        pool = generate_candidates(space, observations, rng=rng)
        best = min(o.objective for o in observations)
        run(select_by_ei(model, pool, best))
    return objectives


def _run_rules_only(
    workload: SyntheticWorkload,
    budget: Budget,
    context: ContextVector,
    noise_rng: np.random.Generator,
    rules: RuleSet | None = None,
) -> list[float]:
    """Defaults, then the rules chase the metrics with no surrogate at all."""
    if rules is None:
        rules = default_rules()
    space = workload.space
    defaults = default_configurations(space)
    objectives: list[float] = []
    previous = None
    for i in range(budget.defaults):
        obs = observe(workload, defaults[i % len(defaults)], context, rng=noise_rng)
        objectives.append(obs.objective)
        previous = obs
    for _ in range(budget.init + budget.search):
        config = apply_rules(rules, previous.config, previous.metrics, space)
        obs = observe(workload, config, context, rng=noise_rng)
        objectives.append(obs.objective)
        previous = obs
    return objectives


# ------------------------------------------------------------------ history


def synthesize_history(
    workloads: Sequence[SyntheticWorkload],
    seed: int = 0,
    n_random: int = 15,
) -> list[TaskRecord]:
    """Archive each workload from its default runs plus random probes."""
    records = []
    for i, workload in enumerate(workloads):
        rng = np.random.default_rng(seed + i)
        context = ContextVector(workload.base_data_size)
        observations = [
            observe(workload, config, context, rng=rng)
            for config in default_configurations(workload.space)
        ]
        for _ in range(n_random):
            observations.append(
                observe(workload, sample_uniform(workload.space, rng), context, rng=rng)
            )
        records.append(
            record_task(
                f"{workload.workload_id}-hist",
                observations,
                workload.space,
                meta_observations=observations[: len(default_configurations(workload.space))],
            )
        )
    return records


def related_history_for(
    workload: SyntheticWorkload, n_tasks: int = 3, seed: int = 0
) -> list[SyntheticWorkload]:
    return [
        make_related_workload(workload, seed * 1000 + 17 * (i + 1)) for i in range(n_tasks)
    ]


def train_similarity_from_records(records: Sequence[TaskRecord]) -> SimilarityModel:
    return train_similarity_model(records)


# ---------------------------------------------------------------- reporting


def run_benchmark(
    workloads: Sequence[SyntheticWorkload],
    strategies: Sequence[str],
    seeds: Sequence[int],
    budget: Budget | None = None,
    history: Sequence[TaskRecord] | None = None,
    similarity: SimilarityModel | None = None,
) -> list[TrajectoryPoint]:
    rows: list[TrajectoryPoint] = []
    for workload in workloads:
        for strategy in strategies:
            for seed in seeds:
                rows.extend(
                    run_strategy(
                        workload,
                        strategy,
                        seed,
                        budget=budget,
                        history=history,
                        similarity=similarity,
                    )
                )
    return rows


def write_csv(rows: Sequence[TrajectoryPoint], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["workload_id", "strategy", "seed", "iteration", "objective", "best_so_far"]
        )
        for row in rows:
            writer.writerow(
                [
                    row.workload_id,
                    row.strategy,
                    row.seed,
                    row.iteration,
                    f"{row.objective:.10g}",
                    f"{row.best_so_far:.10g}",
                ]
            )


def best_at(rows: Sequence[TrajectoryPoint], iteration: int) -> dict[tuple[str, str, int], float]:
    """(workload, strategy, seed) -> best objective seen by the iteration."""
    out: dict[tuple[str, str, int], float] = {}
    for row in rows:
        if row.iteration <= iteration:
            key = (row.workload_id, row.strategy, row.seed)
            out[key] = min(out.get(key, np.inf), row.best_so_far)
    return out


def summarize(rows: Sequence[TrajectoryPoint], milestones: Sequence[int]) -> list[dict[str, Any]]:
    """Mean best-so-far per strategy at each milestone iteration."""
    strategies = sorted({r.strategy for r in rows})
    out = []
    for strategy in strategies:
        entry: dict[str, Any] = {"strategy": strategy}
        for m in milestones:
            values = [
                v
                for (w, s, seed), v in best_at(rows, m).items()
                if s == strategy and v < np.inf
            ]
            entry[f"best_at_{m}"] = float(np.mean(values)) if values else None
        out.append(entry)
    return out
