"""Two-phase configuration tuner with expert rules and optional transfer.

Evaluation proceeds through three stretches of a fixed budget: default
configurations first, then an initialization stretch, then search. During
initialization, suggestions come from the expert rules applied to the
previous run (or, when similar history tasks are available, from a
rank-weighted ensemble of history surrogates). During search, every
iteration arbitrates between the expert rules and the surrogate side:
the expert weight decays as 0.5^T + 0.2 while the surrogate weight is its
measured rank agreement, and a draw against p = w_e / (w_e + w_s) picks
the branch.

The tuner is a strict suggest/observe state machine. suggest() is
idempotent while a suggestion is outstanding; observe() must quote the
outstanding index. A large shift in observed data size archives the
epoch as a history task and restarts from the defaults.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from . import transfer
from .acquisition import generate_candidates, select_by_ei
from .gp import (
    ContextVector,
    Observation,
    concordant_pair_count,
    cross_validated_means,
    fit,
)
from .rules import RuleSet, apply_rules, default_rules, expert_init_suggest
from .space import Configuration, SearchSpace, default_configurations, default_space
from .transfer import SimilarityModel, TaskRecord

EXPERT_WEIGHT_FLOOR = 0.2
RESTART_WINDOW = 5
RESTART_THRESHOLD = 0.5
INIT_NEIGHBORHOOD_RADIUS = 0.2


class ProtocolError(RuntimeError):
    """suggest/observe called out of order, or on a finished task."""


@dataclass(frozen=True)
class Budget:
    """Evaluation counts for the three stretches of a tuning run."""

    defaults: int = 5
    init: int = 5
    search: int = 45

    def __post_init__(self) -> None:
        if self.defaults < 1 or self.init < 0 or self.search < 0:
            raise ValueError(f"invalid budget {self}")

    @property
    def total(self) -> int:
        return self.defaults + self.init + self.search

    def to_document(self) -> dict[str, int]:
        return {"defaults": self.defaults, "init": self.init, "search": self.search}

    @classmethod
    def from_document(cls, doc: dict[str, Any]) -> "Budget":
        return cls(int(doc["defaults"]), int(doc["init"]), int(doc["search"]))


@dataclass(frozen=True)
class Suggestion:
    index: int
    config: Configuration
    rationale: str

    def to_document(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "config": self.config.to_document(),
            "rationale": self.rationale,
        }


def expert_weight(iteration: int) -> float:
    """Decaying expert weight at search iteration T >= 1: 0.5^T + 0.2."""
    if iteration < 1:
        raise ValueError(f"iteration must be >= 1, got {iteration}")
    return 0.5**iteration + EXPERT_WEIGHT_FLOOR


def arbitration_probability(w_expert: float, w_surrogate: float) -> float:
    """Probability of taking the expert branch; 1.0 when both weights are 0."""
    if w_expert < 0 or w_surrogate < 0:
        raise ValueError("weights must be non-negative")
    total = w_expert + w_surrogate
    if total == 0:
        return 1.0
    return w_expert / total


class Tuner:
    """Sequential tuner for one task."""

    def __init__(
        self,
        space: SearchSpace | None = None,
        rules: RuleSet | None = None,
        budget: Budget | None = None,
        history: Sequence[TaskRecord] | None = None,
        similarity: SimilarityModel | None = None,
        seed: int = 0,
        tau0: float = transfer.TAU_0,
        similarity_threshold: float = transfer.SIMILARITY_THRESHOLD,
        top_k: int = transfer.TOP_K,
        restart_threshold: float = RESTART_THRESHOLD,
    ) -> None:
        self.space = space if space is not None else default_space()
        self.rules = rules if rules is not None else default_rules()
        self.budget = budget if budget is not None else Budget()
        self.history: list[TaskRecord] = list(history) if history else []
        self.similarity = similarity
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.tau0 = tau0
        self.similarity_threshold = similarity_threshold
        self.top_k = top_k
        self.restart_threshold = restart_threshold

        self.observations: list[Observation] = []
        self.trace: list[dict[str, Any]] = []
        self.epoch = 0
        self.iteration = 0
        self.total_evaluations = 0
        self.status = "created"
        self._defaults = default_configurations(self.space)
        self._outstanding: Suggestion | None = None
        self._x_pre: Observation | None = None
        self._active: list[tuple[TaskRecord, float]] | None = None

    # ------------------------------------------------------------ inspection

    @property
    def n_observed(self) -> int:
        return len(self.observations)

    @property
    def finished(self) -> bool:
        return self.status in ("finished", "stopped")

    @property
    def phase(self) -> str:
        n = self.n_observed
        if n < self.budget.defaults:
            return "defaults"
        if n < self.budget.defaults + self.budget.init:
            return "init"
        return "search"

    @property
    def best_observation(self) -> Observation | None:
        if not self.observations:
            return None
        return min(self.observations, key=lambda o: o.objective)

    @property
    def improvement_ratio(self) -> float | None:
        """Best objective over the mean of the default runs (lower is better)."""
        n_def = min(self.budget.defaults, self.n_observed)
        if n_def == 0:
            return None
        default_mean = float(np.mean([o.objective for o in self.observations[:n_def]]))
        if default_mean == 0:
            return None
        return self.best_observation.objective / default_mean

    @property
    def active_history(self) -> list[tuple[TaskRecord, float]]:
        return list(self._active) if self._active else []

    # ------------------------------------------------------------ suggesting

    def suggest(self) -> Suggestion:
        if self.finished:
            raise ProtocolError(f"task is {self.status}")
        if self._outstanding is not None:
            return self._outstanding
        n = self.n_observed
        if n < self.budget.defaults:
            config = self._defaults[n % len(self._defaults)]
            suggestion = Suggestion(n, config, "default")
        elif n < self.budget.defaults + self.budget.init:
            suggestion = Suggestion(n, *self._suggest_init())
        else:
            suggestion = Suggestion(n, *self._suggest_search())
        self._outstanding = suggestion
        if self.status in ("created", "restarted"):
            self.status = "running"
        return suggestion

    def _ensure_filtered(self) -> list[tuple[TaskRecord, float]]:
        if self._active is None:
            meta = self._default_meta()
            if meta is None or self.similarity is None or not self.history:
                self._active = []
            else:
                self._active = transfer.filter_tasks(
                    self.similarity,
                    meta,
                    self.history,
                    threshold=self.similarity_threshold,
                    top_k=self.top_k,
                )
        return self._active

    def _default_meta(self) -> np.ndarray | None:
        head = self.observations[: self.budget.defaults]
        if any(o.metrics is not None for o in head):
            return transfer.task_meta_features(head)
        return None

    def _suggest_init(self) -> tuple[Configuration, str]:
        active = self._ensure_filtered()
        if active:
            current = fit(self.observations, self.space)
            ensemble = transfer.build_ensemble(
                [r for r, _ in active], current, self.observations, iteration=1, tau0=self.tau0
            )
            pool = generate_candidates(self.space, self.observations, rng=self.rng)
            idx = transfer.combined_rank_select(ensemble, pool.configs, self.observations)
            return pool.configs[idx], "ensemble_init"
        prev = self._x_pre
        if prev is not None and prev.metrics is not None:
            config = expert_init_suggest(
                prev.config,
                prev.metrics,
                self.rules,
                self.space,
                radius=INIT_NEIGHBORHOOD_RADIUS,
                rng=self.rng,
            )
        else:
            from .space import sample_neighborhood, sample_uniform

            if prev is not None:
                config = sample_neighborhood(
                    prev.config, self.space, INIT_NEIGHBORHOOD_RADIUS, self.rng
                )
            else:
                config = sample_uniform(self.space, self.rng)
        return config, "expert_init"

    def _suggest_search(self) -> tuple[Configuration, str]:
        active = self._ensure_filtered()
        iteration = self.iteration + 1
        w_e = expert_weight(iteration)
        current = fit(self.observations, self.space)
        ensemble = None
        if active:
            ensemble = transfer.build_ensemble(
                [r for r, _ in active],
                current,
                self.observations,
                iteration=iteration,
                tau0=self.tau0,
            )
            w_s = ensemble.generalization_weight()
        else:
            n = self.n_observed
            preds = cross_validated_means(self.observations, self.space, current.kernel)
            y = np.array([o.objective for o in self.observations])
            w_s = 2.0 * concordant_pair_count(preds, y) / (n * (n - 1))
        p_e = arbitration_probability(w_e, w_s)
        draw = float(self.rng.random())

        prev = self._x_pre
        if draw < p_e and prev is not None and prev.metrics is not None:
            config = apply_rules(self.rules, prev.config, prev.metrics, self.space)
            rationale = "expert_rules"
        else:
            pool = generate_candidates(self.space, self.observations, rng=self.rng)
            if ensemble is not None:
                idx = transfer.combined_rank_select(ensemble, pool.configs, self.observations)
                config = pool.configs[idx]
                rationale = "ensemble_rank"
            else:
                best = self.best_observation.objective
                config = select_by_ei(current, pool, best)
                rationale = "bo_ei"
        self.iteration = iteration
        self.trace.append(
            {
                "epoch": self.epoch,
                "iteration": iteration,
                "w_expert": w_e,
                "w_surrogate": float(w_s),
                "p_expert": float(p_e),
                "draw": draw,
                "rationale": rationale,
            }
        )
        return config, rationale

    # ------------------------------------------------------------- observing

    def observe(
        self,
        index: int,
        objective: float,
        metrics=None,
        context: ContextVector | None = None,
    ) -> None:
        if self.finished:
            raise ProtocolError(f"task is {self.status}")
        if self._outstanding is None:
            raise ProtocolError("no outstanding suggestion to observe")
        if index != self._outstanding.index:
            raise ProtocolError(
                f"observation for index {index}, but index {self._outstanding.index} is outstanding"
            )
        if context is None:
            context = ContextVector(1.0)
        obs = Observation(
            config=self._outstanding.config,
            objective=float(objective),
            context=context,
            metrics=metrics,
        )
        self._outstanding = None
        self.total_evaluations += 1
        if self._workload_changed(obs):
            self.observations.append(obs)
            self._restart()
            return
        self.observations.append(obs)
        self._x_pre = obs
        if self.n_observed >= self.budget.total:
            self.status = "finished"

    def _workload_changed(self, obs: Observation) -> bool:
        if self.n_observed < RESTART_WINDOW:
            return False
        trailing = [o.context.data_size for o in self.observations[-RESTART_WINDOW:]]
        mean = float(np.mean(trailing))
        if mean <= 0:
            return False
        return abs(obs.context.data_size - mean) / mean > self.restart_threshold

    def _restart(self) -> None:
        """Archive the epoch as a history task and start over on defaults."""
        record = self.to_record(f"epoch-{self.epoch}")
        if record is not None:
            self.history.append(record)
        self.epoch += 1
        self.observations = []
        self.iteration = 0
        self._x_pre = None
        self._active = None
        self.status = "restarted"

    def stop(self) -> None:
        if self.status != "finished":
            self.status = "stopped"
        self._outstanding = None

    def extend_budget(self, extra_search: int) -> None:
        if extra_search < 1:
            raise ValueError(f"extra_search must be >= 1, got {extra_search}")
        self.budget = Budget(self.budget.defaults, self.budget.init, self.budget.search + extra_search)
        if self.status == "finished" and self.n_observed < self.budget.total:
            self.status = "running"

    # ----------------------------------------------------------- persistence

    def to_record(self, task_id: str) -> TaskRecord | None:
        """Archive the current epoch, or None if it cannot support a record."""
        if not self.observations:
            return None
        meta_obs = [
            o for o in self.observations[: self.budget.defaults] if o.metrics is not None
        ]
        try:
            return transfer.record_task(
                task_id,
                self.observations,
                self.space,
                meta_observations=meta_obs or None,
            )
        except ValueError:
            return None

    def to_status_document(self) -> dict[str, Any]:
        best = self.best_observation
        return {
            "status": self.status,
            "phase": self.phase,
            "epoch": self.epoch,
            "iteration": self.iteration,
            "n_observed": self.n_observed,
            "total_evaluations": self.total_evaluations,
            "budget": self.budget.to_document(),
            "best": (
                {"objective": best.objective, "config": best.config.to_document()}
                if best
                else None
            ),
            "improvement_ratio": self.improvement_ratio,
            "outstanding": self._outstanding.to_document() if self._outstanding else None,
            "active_history": [
                {"task_id": r.task_id, "similarity": s} for r, s in (self._active or [])
            ],
            "trace": list(self.trace),
        }
