"""Expected improvement acquisition and candidate generation.

Objectives are minimized. EI of a Gaussian posterior (mean m, variance v)
against the incumbent best y*:

    sigma = 0:  max(y* - m, 0)
    else:       z = (y* - m) / sigma
                EI = (y* - m) Phi(z) + sigma phi(z)
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import norm

from .gp import ContextVector, GpSurrogate, Observation
from .space import Configuration, SearchSpace, mutate, sample_uniform

N_RANDOM = 1000
N_MUTATIONS = 200
_TOP_K_MUTATION_SOURCES = 10


def expected_improvement(mean: float, variance: float, best: float) -> float:
    """EI for minimization; always finite and >= 0."""
    if variance < 0 or not math.isfinite(variance):
        raise ValueError(f"variance must be finite and >= 0, got {variance}")
    if not (math.isfinite(mean) and math.isfinite(best)):
        raise ValueError("mean and best must be finite")
    gap = best - mean
    if variance == 0.0:
        return max(gap, 0.0)
    sigma = math.sqrt(variance)
    z = gap / sigma
    val = gap * norm.cdf(z) + sigma * norm.pdf(z)
    return max(float(val), 0.0)


def expected_improvement_batch(
    means: np.ndarray, variances: np.ndarray, best: float
) -> np.ndarray:
    means = np.asarray(means, dtype=float)
    variances = np.asarray(variances, dtype=float)
    gap = best - means
    sigma = np.sqrt(np.maximum(variances, 0.0))
    out = np.maximum(gap, 0.0)
    pos = sigma > 0
    if np.any(pos):
        z = gap[pos] / sigma[pos]
        out[pos] = gap[pos] * norm.cdf(z) + sigma[pos] * norm.pdf(z)
    return np.maximum(out, 0.0)


@dataclass(frozen=True)
class CandidatePool:
    """Candidate configurations with per-candidate provenance
    ("random" or "mutation")."""

    configs: tuple[Configuration, ...]
    provenance: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.configs) != len(self.provenance):
            raise ValueError("configs and provenance must align")
        if len(self.configs) == 0:
            raise ValueError("candidate pool must be non-empty")

    def __len__(self) -> int:
        return len(self.configs)


def generate_candidates(
    space: SearchSpace,
    observations: Sequence[Observation],
    n_random: int = N_RANDOM,
    n_mutations: int = N_MUTATIONS,
    rng: np.random.Generator | None = None,
) -> CandidatePool:
    """Uniform samples plus mutations of the best observed configurations.

    Mutation sources are the top 10 observed configs by objective, cycled
    round-robin. With no observations every candidate is a uniform sample.
    """
    if rng is None:
        rng = np.random.default_rng()
    if n_random < 0 or n_mutations < 0 or n_random + n_mutations == 0:
        raise ValueError("need a positive total candidate count")
    configs: list[Configuration] = []
    provenance: list[str] = []
    for _ in range(n_random):
        configs.append(sample_uniform(space, rng))
        provenance.append("random")
    if observations:
        ranked = sorted(observations, key=lambda o: o.objective)
        sources = [o.config for o in ranked[:_TOP_K_MUTATION_SOURCES]]
        for i in range(n_mutations):
            configs.append(mutate(sources[i % len(sources)], space, rng))
            provenance.append("mutation")
    else:
        for _ in range(n_mutations):
            configs.append(sample_uniform(space, rng))
            provenance.append("random")
    return CandidatePool(tuple(configs), tuple(provenance))


def select_by_ei(
    model: GpSurrogate,
    pool: CandidatePool,
    best_observed: float,
    context: ContextVector | None = None,
) -> Configuration:
    """Pool member with maximal EI; ties break to the lower predicted mean,
    then to the earliest pool position."""
    means, variances = model.predict_batch(pool.configs, context=context)
    ei = expected_improvement_batch(means, variances, best_observed)
    best_ei = np.max(ei)
    tied = np.flatnonzero(ei == best_ei)
    best_mean = np.min(means[tied])
    tied = tied[means[tied] == best_mean]
    return pool.configs[int(tied[0])]
