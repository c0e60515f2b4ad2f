"""Cross-task transfer: task records, learned similarity, ensembles.

A finished tuning task is archived as a TaskRecord: its observations (the
first 25), the surrogate fitted on exactly those observations, a
meta-feature vector (the mean runtime-metric vector over the task's
default-configuration runs), and the search space the task ran on.

Relatedness of two archived tasks is measured behaviorally: both
surrogates score a shared set of probe configurations and the similarity
is the fraction of probe pairs the two models order the same way. A
boosted-tree regressor learns to predict that agreement from the two
meta-feature vectors, so a new task can be matched against history from
its default-run metrics alone, before any search happens.

Selected history surrogates join the current task's surrogate in an
ensemble. Member weights follow each member's rank agreement with the
observations collected so far (the current task's own member is scored
on held-out predictions to keep it honest), sharpened over time by a
shrinking softmax temperature. Candidates are scored by each member's
expected improvement and picked by the best weighted rank.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any, Sequence

import numpy as np
from scipy.stats import rankdata

from .acquisition import expected_improvement_batch
from .gbrt import GradientBoostedTrees
from .gp import (
    ContextVector,
    GpSurrogate,
    Observation,
    concordant_pair_count,
    cross_validated_means,
    fit,
)
from .metrics import DATA_BOUND_METRICS, METRIC_NAMES
from .space import (
    Configuration,
    SearchSpace,
    default_configurations,
    sample_neighborhood,
    sample_uniform,
)

MAX_RECORD_OBSERVATIONS = 25
PROBE_COUNT = 50
SIMILARITY_THRESHOLD = 0.65
TOP_K = 5
TAU_0 = 0.1

_PROBE_LOCAL_FRACTION = 0.5
_PROBE_RADIUS = 0.45
_PROBE_CAT_FLIP = 0.3


_INPUT_SIZE_INDEX = METRIC_NAMES.index("input_size_gb")
_DATA_BOUND_INDICES = tuple(METRIC_NAMES.index(name) for name in DATA_BOUND_METRICS)


def task_meta_features(observations: Sequence[Observation]) -> np.ndarray:
    """Component-wise mean runtime-metric vector over the given observations."""
    vectors = [o.metrics.as_vector() for o in observations if o.metrics is not None]
    if not vectors:
        raise ValueError("meta features need at least one observation with metrics")
    return np.mean(np.stack(vectors), axis=0)


def _intensity_vector(meta: np.ndarray) -> np.ndarray:
    """Copy of a meta vector with volume channels divided by input size.

    Two jobs that merely read different amounts of data should not look
    alike or unalike for that reason alone, so the channels that grow
    with input volume are compared as per-gigabyte intensities;
    ``input_size_gb`` itself stays raw.
    """
    out = np.array(meta, dtype=float)
    size = max(float(out[_INPUT_SIZE_INDEX]), 1e-9)
    for idx in _DATA_BOUND_INDICES:
        out[idx] = out[idx] / size
    return out


@dataclass(frozen=True)
class TaskRecord:
    """Archived task: identity, meta features, data, surrogate, space.

    `observations` holds at most the first 25 evaluations and the
    surrogate is fitted on exactly those, so a record re-loaded from disk
    reproduces the same model.
    """

    task_id: str
    meta: np.ndarray
    observations: tuple[Observation, ...]
    surrogate: GpSurrogate
    space: SearchSpace

    def to_document(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "meta": self.meta.tolist(),
            "observations": [o.to_document() for o in self.observations],
            "surrogate": self.surrogate.to_document(),
            "space": self.space.to_document(),
        }

    @classmethod
    def from_document(cls, doc: dict[str, Any]) -> "TaskRecord":
        space = SearchSpace.from_document(doc["space"])
        return cls(
            task_id=doc["task_id"],
            meta=np.asarray(doc["meta"], dtype=float),
            observations=tuple(
                Observation.from_document(o) for o in doc["observations"]
            ),
            surrogate=GpSurrogate.from_document(doc["surrogate"], space),
            space=space,
        )


def record_task(
    task_id: str,
    observations: Sequence[Observation],
    space: SearchSpace,
    meta_observations: Sequence[Observation] | None = None,
) -> TaskRecord:
    """Fit and archive a completed task.

    Keeps the first 25 observations. The archived surrogate models the
    log of the cost: run costs are heavy-tailed across a search space,
    the log surface is far closer to stationary, and every downstream
    use of these models (probe ordering, rank blending) only ever reads
    the order of their predictions. meta_observations defaults to the
    stored observations; pass the default-phase runs when they are known.
    """
    kept = tuple(observations[:MAX_RECORD_OBSERVATIONS])
    if not kept:
        raise ValueError("cannot archive a task with no observations")
    logged = [
        replace(o, objective=float(np.log(max(o.objective, 1e-12)))) for o in kept
    ]
    surrogate = fit(logged, space)
    meta = task_meta_features(meta_observations if meta_observations else kept)
    return TaskRecord(
        task_id=task_id,
        meta=meta,
        observations=kept,
        surrogate=surrogate,
        space=space,
    )


def draw_probe_set(
    space: SearchSpace,
    size: int = PROBE_COUNT,
    rng: np.random.Generator | None = None,
) -> list[Configuration]:
    """Probe configurations for behavioral similarity scoring.

    Blends neighborhood samples around the default configurations with
    uniform draws. Every archived surrogate has seen the default runs,
    so near-default probes compare models where they are best informed;
    the uniform share keeps genuinely different tasks distinguishable
    out in the rest of the space. Categorical values of the local probes
    are occasionally resampled so those axes stay visible too.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    anchors = default_configurations(space)
    probes: list[Configuration] = []
    for _ in range(size):
        if rng.random() >= _PROBE_LOCAL_FRACTION:
            probes.append(sample_uniform(space, rng))
            continue
        base = anchors[int(rng.integers(len(anchors)))]
        local = sample_neighborhood(base, space, _PROBE_RADIUS, rng)
        values = dict(local.values)
        for param in space.params:
            if not param.is_numerical and rng.random() < _PROBE_CAT_FLIP:
                values[param.name] = param.choices[int(rng.integers(len(param.choices)))]
        probes.append(Configuration(values))
    return probes


def pairwise_similarity(
    m_i: GpSurrogate, m_j: GpSurrogate, probes: Sequence[Configuration]
) -> float:
    """Order agreement of two surrogates on a shared probe set, in [0, 1].

    Both models predict every probe; the score is the fraction of probe
    pairs ranked the same way by both (ties split). Symmetric, and
    unchanged by any strictly increasing transform of either model's
    output.
    """
    n = len(probes)
    if n < 2:
        raise ValueError("similarity needs at least 2 probe configurations")
    means_i, _ = m_i.predict_batch(list(probes))
    means_j, _ = m_j.predict_batch(list(probes))
    f = concordant_pair_count(means_i, means_j)
    return 2.0 * f / (n * (n - 1))


def similarity_features(meta_a: np.ndarray, meta_b: np.ndarray) -> np.ndarray:
    """Model input for one ordered task pair.

    Volume channels are first rescaled to per-gigabyte intensities, then
    the features are both vectors plus their elementwise relative
    difference |a - b| / (|a| + |b|); the difference channel lets shallow
    trees express "these two tasks look alike" directly. Three aggregates
    of the difference channel (mean, max, rms) follow so a single split
    can act on overall closeness instead of composing a dozen per-channel
    splits.
    """
    a = _intensity_vector(np.asarray(meta_a, dtype=float))
    b = _intensity_vector(np.asarray(meta_b, dtype=float))
    rel = np.abs(a - b) / (np.abs(a) + np.abs(b) + 1e-9)
    agg = np.array([rel.mean(), rel.max(), float(np.sqrt(np.mean(rel**2)))])
    # scale-free channel-profile agreement: cosine of the mean-centered
    # log profiles, insensitive to each task's overall magnitude
    la = np.log(np.abs(a) + 1e-9)
    lb = np.log(np.abs(b) + 1e-9)
    la -= la.mean()
    lb -= lb.mean()
    denom = float(np.linalg.norm(la) * np.linalg.norm(lb))
    shape = np.array([float(la @ lb) / denom if denom > 0 else 1.0])
    return np.concatenate([a, b, rel, agg, shape])


Triple = tuple[np.ndarray, np.ndarray, float]


def build_training_set(
    history: Sequence[TaskRecord],
    probe_size: int = PROBE_COUNT,
    rng: np.random.Generator | None = None,
) -> list[Triple]:
    """Ordered meta-feature pairs labeled with surrogate similarity.

    One probe set of `probe_size` configurations is drawn with `rng` and
    shared by every pair, giving N(N-1) triples (meta_i, meta_j, S(i,j))
    for N records.
    """
    if len(history) < 2:
        raise ValueError("need at least 2 records to form training pairs")
    if rng is None:
        rng = np.random.default_rng(0)
    space = history[0].space
    probes = draw_probe_set(space, probe_size, rng)
    labels = {}
    triples: list[Triple] = []
    for i, a in enumerate(history):
        for j, b in enumerate(history):
            if i == j:
                continue
            if (j, i) in labels:
                s = labels[(j, i)]
            else:
                s = pairwise_similarity(a.surrogate, b.surrogate, probes)
            labels[(i, j)] = s
            triples.append((a.meta, b.meta, s))
    return triples


class SimilarityModel:
    """Predicts surrogate order-agreement of two tasks from meta features."""

    def __init__(self, model: GradientBoostedTrees):
        self.model = model

    def predict_pair(self, meta_a: np.ndarray, meta_b: np.ndarray) -> float:
        """Predicted similarity in [0, 1]; symmetric in its arguments.

        The underlying trees see ordered features, so the score averages
        both orders before clamping.
        """
        fwd = float(self.model.predict(similarity_features(meta_a, meta_b)))
        rev = float(self.model.predict(similarity_features(meta_b, meta_a)))
        return min(max(0.5 * (fwd + rev), 0.0), 1.0)

    def to_document(self) -> dict[str, Any]:
        return {"model": self.model.to_document()}

    @classmethod
    def from_document(cls, doc: dict[str, Any]) -> "SimilarityModel":
        return cls(GradientBoostedTrees.from_document(doc["model"]))


def train_similarity_model(
    triples: Sequence[Triple], **model_kwargs: Any
) -> SimilarityModel:
    if not triples:
        raise ValueError("cannot train a similarity model on no pairs")
    X = np.stack([similarity_features(a, b) for a, b, _ in triples])
    y = np.asarray([label for _, _, label in triples], dtype=float)
    model = GradientBoostedTrees(**model_kwargs)
    model.fit(X, y)
    return SimilarityModel(model)


def score_tasks(
    model: SimilarityModel,
    target_meta: np.ndarray,
    history: Sequence[TaskRecord],
) -> list[tuple[TaskRecord, float]]:
    """Predicted similarity of the target against every history record."""
    return [(r, model.predict_pair(target_meta, r.meta)) for r in history]


def filter_tasks(
    model: SimilarityModel | None,
    target_meta: np.ndarray,
    history: Sequence[TaskRecord],
    threshold: float = SIMILARITY_THRESHOLD,
    top_k: int = TOP_K,
) -> list[tuple[TaskRecord, float]]:
    """History tasks predicted similar enough, best first, at most top_k.

    Returns (record, predicted similarity) pairs so callers can report
    why a task made the cut.
    """
    if model is None or not history:
        return []
    scored = score_tasks(model, target_meta, history)
    kept = [(r, s) for r, s in scored if s >= threshold]
    kept.sort(key=lambda pair: -pair[1])
    return kept[:top_k]


# ----------------------------------------------------------------- ensemble


@dataclass
class Ensemble:
    """History surrogates plus the current task's surrogate (always last)."""

    members: list[GpSurrogate]
    task_ids: list[str]
    weights: np.ndarray
    pair_counts: np.ndarray
    temperature: float
    n_observations: int

    @property
    def size(self) -> int:
        return len(self.members)

    def generalization_weight(self) -> float:
        return ensemble_generalization_weight(
            self.weights, self.pair_counts, self.n_observations
        )


def member_pair_counts(
    members: Sequence[GpSurrogate],
    observations: Sequence[Observation],
    cross_validate_last: bool = True,
) -> np.ndarray:
    """Concordant pair count G(j) of each member against the observations.

    History members are scored with their direct predictive means at the
    observed configurations. The last member is the current task's own
    surrogate; since it was fitted on these very observations, its count
    uses held-out (cross-validated) predictions instead, so a model that
    merely memorizes scores no better than it generalizes.
    """
    n = len(observations)
    if n < 2:
        raise ValueError("pair counts need at least 2 observations")
    configs = [o.config for o in observations]
    contexts = [o.context for o in observations]
    y = np.array([o.objective for o in observations])
    counts = np.empty(len(members))
    for j, member in enumerate(members):
        if cross_validate_last and j == len(members) - 1:
            preds = cross_validated_means(observations, member.space, member.kernel)
        else:
            preds, _ = member.predict_batch(configs, contexts=contexts)
        counts[j] = concordant_pair_count(preds, y)
    return counts


def softmax_weights(scores: np.ndarray, temperature: float) -> np.ndarray:
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    z = np.asarray(scores, dtype=float) / temperature
    z -= z.max()
    e = np.exp(z)
    return e / e.sum()


def temperature_at(iteration: int, tau0: float = TAU_0) -> float:
    """Softmax temperature at search iteration T >= 1: tau0 / (1 + ln T)."""
    if iteration < 1:
        raise ValueError(f"iteration must be >= 1, got {iteration}")
    return tau0 / (1.0 + np.log(iteration))


def task_weights(
    members: Sequence[GpSurrogate],
    observations: Sequence[Observation],
    iteration: int,
    tau0: float = TAU_0,
) -> np.ndarray:
    """Softmax ensemble weights from normalized rank agreement.

    Each member's concordant pair count G(j) (current-task member last,
    scored on held-out predictions) is scaled to [0, 1] and pushed through
    a softmax whose temperature tau0 / (1 + ln T) tightens as the search
    iteration T grows, concentrating weight on the best-agreeing member.
    """
    counts = member_pair_counts(members, observations)
    n = len(observations)
    agreement = 2.0 * counts / (n * (n - 1))
    return softmax_weights(agreement, temperature_at(iteration, tau0))


def ensemble_generalization_weight(
    weights: np.ndarray,
    pair_counts: np.ndarray,
    observations: Sequence[Observation] | int,
) -> float:
    """Weighted rank agreement of the whole ensemble, in [0, 1].

    w_s = sum_j w_j * 2 G(j) / (n (n - 1)) for n observations.
    """
    n = observations if isinstance(observations, int) else len(observations)
    if n < 2:
        raise ValueError("need at least 2 observations")
    agreement = 2.0 * np.asarray(pair_counts, dtype=float) / (n * (n - 1))
    return float(np.dot(np.asarray(weights, dtype=float), agreement))


def build_ensemble(
    selected: Sequence[TaskRecord],
    current: GpSurrogate,
    observations: Sequence[Observation],
    iteration: int,
    tau0: float = TAU_0,
) -> Ensemble:
    """Weight history members and the current surrogate by rank agreement."""
    members = [r.surrogate for r in selected] + [current]
    task_ids = [r.task_id for r in selected] + ["current"]
    counts = member_pair_counts(members, observations)
    n = len(observations)
    agreement = 2.0 * counts / (n * (n - 1))
    tau = temperature_at(iteration, tau0)
    weights = softmax_weights(agreement, tau)
    return Ensemble(
        members=members,
        task_ids=task_ids,
        weights=weights,
        pair_counts=counts,
        temperature=tau,
        n_observations=n,
    )


def member_incumbents(
    members: Sequence[GpSurrogate], observations: Sequence[Observation]
) -> np.ndarray:
    """Per-member incumbent objective for expected improvement.

    History members use the minimum of their predictive means over the
    observed configurations (with each observation's own context); the
    current-task member (last) uses the best observed objective.
    """
    if not observations:
        raise ValueError("incumbents need at least one observation")
    configs = [o.config for o in observations]
    contexts = [o.context for o in observations]
    incumbents = np.empty(len(members))
    for j, member in enumerate(members[:-1]):
        means, _ = member.predict_batch(configs, contexts=contexts)
        incumbents[j] = float(np.min(means))
    incumbents[-1] = min(o.objective for o in observations)
    return incumbents


def _rank_components(
    ensemble: Ensemble,
    candidates: Sequence[Configuration],
    observations: Sequence[Observation],
    context: ContextVector | None,
) -> tuple[np.ndarray, np.ndarray]:
    if not candidates:
        raise ValueError("no candidates to rank")
    incumbents = member_incumbents(ensemble.members, observations)
    n = len(candidates)
    combined = np.zeros(n)
    current_ranks = np.zeros(n)
    for j, member in enumerate(ensemble.members):
        means, variances = member.predict_batch(list(candidates), context=context)
        ei = expected_improvement_batch(means, variances, float(incumbents[j]))
        ranks = rankdata(-ei, method="average")
        combined += ensemble.weights[j] * ranks
        if j == len(ensemble.members) - 1:
            current_ranks = ranks
    return combined, current_ranks


def combined_rank(
    ensemble: Ensemble,
    candidates: Sequence[Configuration],
    observations: Sequence[Observation],
    context: ContextVector | None = None,
) -> np.ndarray:
    """Weighted expected-improvement rank of every candidate (lower is
    better).

    Each member ranks the candidates by its own expected improvement
    against its own incumbent (average ranks on ties); a candidate's score
    is the weight-blended rank across members. Candidates are scored under
    the given context when one is supplied.
    """
    combined, _ = _rank_components(ensemble, candidates, observations, context)
    return combined


def combined_rank_select(
    ensemble: Ensemble,
    candidates: Sequence[Configuration],
    observations: Sequence[Observation],
    context: ContextVector | None = None,
) -> int:
    """Index of the candidate with the best combined rank.

    Ties fall to the current-task member's own rank, then to candidate
    order.
    """
    combined, current_ranks = _rank_components(
        ensemble, candidates, observations, context
    )
    order = np.lexsort((np.arange(len(candidates)), current_ranks, combined))
    return int(order[0])
