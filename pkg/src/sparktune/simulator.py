"""Synthetic Spark workloads for benchmarks and tests.

A workload hides a latent optimum in the encoded configuration space. The
objective is a noisy quadratic bowl around that optimum (memory-hours of
cost) plus a low-rank interaction term that couples parameters through a
few workload-specific directions, and the optimum drifts with input data
size. The interaction directions carry most of the cost variance and are
a smooth function of the workload's own traits (optimum position and
family), so a workload's perturbed relatives bend along nearly the same
directions while workloads with distant optima do not; unrelated
workloads therefore rank configurations differently while kin rank them
alike, and the difference shows up in observable behavior. Both cost terms vanish at the latent optimum, so it
is the exact minimizer regardless of the mix. Executions also produce the
runtime metric vector; metrics are deterministic given configuration,
workload, and data size, so repeated runs differ only in objective noise.

Metric constants are calibrated so that a configuration at the latent
optimum sits inside every rule's neutral band, while mis-provisioning in
a given direction pushes the corresponding metric across its threshold.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .gp import ContextVector, Observation
from .metrics import RuntimeMetrics
from .space import (
    Configuration,
    SearchSpace,
    SpaceError,
    decode,
    default_space,
    encode,
    validate,
)

FAMILIES = ("map_heavy", "mixed", "reduce_heavy")

_INPUT_AMPLITUDE = {"map_heavy": 1.0, "mixed": 0.8, "reduce_heavy": 0.6}
_SHUFFLE_AMPLITUDE = {"map_heavy": 0.6, "mixed": 0.8, "reduce_heavy": 1.0}
_OUTPUT_FRACTION = {"map_heavy": 0.2, "mixed": 0.35, "reduce_heavy": 0.5}
_SHUFFLE_FRACTION = {"map_heavy": 0.1, "mixed": 0.35, "reduce_heavy": 0.6}
_STAGE_COUNT = {"map_heavy": 3, "mixed": 8, "reduce_heavy": 13}

# per-parameter curvature of the cost bowl. Every dimension costs
# something (moving any coordinate off the latent optimum must change
# the surface, or distance in encoded space would stop implying
# behavioral difference), but the categorical knobs and overheads cost
# little: two workloads that happen to want the same discrete choice
# would otherwise share a large identical cost component and look more
# alike than their optima warrant. Discrete choices differentiate
# workloads mainly through the interaction directions instead.
_BASE_CURVATURE = {
    "spark.sql.files.maxPartitionBytes": 1.2,
    "spark.sql.adaptive.maxNumPostShufflePartitions": 1.0,
    "spark.dynamicAllocation.maxExecutors": 0.8,
    "spark.driver.cores": 0.1,
    "spark.driver.memory": 0.9,
    "spark.driver.memoryOverhead": 0.15,
    "spark.executor.cores": 0.2,
    "spark.executor.memory": 1.3,
    "spark.executor.memoryOverhead": 0.15,
    "spark.vcore.boost.ratio": 0.1,
}

_FAMILY_CURVATURE = {
    "map_heavy": {
        "spark.sql.files.maxPartitionBytes": 1.6,
        "spark.sql.adaptive.maxNumPostShufflePartitions": 0.6,
    },
    "mixed": {},
    "reduce_heavy": {
        "spark.sql.files.maxPartitionBytes": 0.6,
        "spark.sql.adaptive.maxNumPostShufflePartitions": 1.6,
    },
}

# the interaction term sums INTERACTION_RANK squared projections of the
# offset from the optimum onto workload-specific unit directions; its
# weight is set so those directions dominate the cost variance, because
# they are what makes unrelated workloads disagree about config rankings.
# Categorical coordinates get a reduced share of each direction: a
# discrete flip moves a whole unit in encoded space, and a full-strength
# projection there would turn every rule-driven choice flip into a coin
# toss against the interaction term
INTERACTION_RANK = 3
INTERACTION_WEIGHT = 6.0
CAT_INTERACTION_SCALE = 0.28

# numeric curvature multiplier falls from 1 at a centered optimum to this
# floor at the edge of the optimum range
CURV_EDGE_DAMP = 0.25

COST_PER_GB = 0.05
SHIFT_RANGE = 0.15
NOISE_STD = 0.02


@dataclass(frozen=True)
class SyntheticWorkload:
    workload_id: str
    family: str
    base_data_size: float
    ideal: Configuration
    ideal_encoded: np.ndarray
    curvature: np.ndarray
    interaction: np.ndarray
    context_sensitivity: np.ndarray
    noise_std: float
    space: SearchSpace


@dataclass(frozen=True)
class ExecutionResult:
    objective: float
    runtime_s: float
    avg_memory_gb: float
    metrics: RuntimeMetrics
    context: ContextVector


def _numeric_dims(space: SearchSpace) -> np.ndarray:
    mask = np.zeros(space.encoded_dim, dtype=bool)
    for param, start, width in space.blocks():
        if param.is_numerical:
            mask[start] = True
    return mask


def _sensitivity_shares(workload: SyntheticWorkload) -> dict[str, float]:
    """Fraction of total cost sensitivity attributable to each parameter.

    Uses the diagonal of the cost Hessian, which folds the quadratic
    coefficients together with each dimension's interaction mass.
    """
    diag = workload.curvature + INTERACTION_WEIGHT * np.sum(
        workload.interaction**2, axis=0
    )
    total = float(diag.sum())
    shares = {}
    for param, start, width in workload.space.blocks():
        shares[param.name] = float(diag[start : start + width].sum()) / total
    return shares


_INTERACTION_BASIS_SEED = 173604
_PHI_DISCRETE_SCALE = 0.35
_PHI_FEATURE_COUNT = 256
_PHI_LENGTHSCALE = 0.35
_HIDDEN_IDEAL_SEED = 918273
_SHAPE_SEED = 550271
_PHI_PROJECT_STD = 0.175
_PHI_HIDDEN = (
    "spark.driver.cores",
    "spark.driver.memoryOverhead",
    "spark.executor.memoryOverhead",
    "spark.vcore.boost.ratio",
)


def _trait_vector(
    family: str, ideal_encoded: np.ndarray, space: SearchSpace
) -> np.ndarray:
    """Centered trait vector of the observable workload properties.

    Holds the optimum coordinates of the knobs whose sweet spot leaves a
    trace in the runtime metrics, plus the family. Knobs with no metric
    trace are zeroed: everything the surface shape depends on has to be
    recoverable from observable behavior.
    """
    dim = ideal_encoded.size
    phi = np.empty(dim + len(FAMILIES))
    phi[:dim] = ideal_encoded
    for param, start, width in space.blocks():
        if param.name in _PHI_HIDDEN:
            phi[start : start + width] = 0.0
        elif param.is_numerical:
            phi[start] -= 0.5
        else:
            # centered one-hot blocks come in lumps of +-2/3; damped so
            # vertex agreement cannot dominate the continuous traits
            phi[start : start + width] -= 1.0 / width
            phi[start : start + width] *= _PHI_DISCRETE_SCALE
    phi[dim:] = -1.0 / len(FAMILIES)
    phi[dim + FAMILIES.index(family)] += 1.0
    phi[dim:] *= _PHI_DISCRETE_SCALE
    return phi


def _derive_hidden_ideals(
    family: str, z: np.ndarray, space: SearchSpace
) -> None:
    """Fill the metric-invisible optimum coordinates from the visible ones.

    Overhead sweet spots track heap sizes, and the best core/boost
    choices follow the job's resource profile, so these coordinates are
    a fixed function of the observable traits rather than independent
    draws. Distance between two optima therefore always comes with an
    observable difference, which is what makes behavioral similarity
    predictable from metrics alone. The maps are seeded projections of
    the trait vector: a normal CDF squash keeps the numeric marginals
    spread over their range, and vertex choices take an argmax over
    projected scores, so both stay near-uniform across workloads.
    """
    phi = _trait_vector(family, z, space)
    rng = np.random.default_rng(_HIDDEN_IDEAL_SEED)

    for param, start, width in space.blocks():
        w = rng.normal(size=(width, phi.size))
        if param.name not in _PHI_HIDDEN:
            continue
        scores = w @ phi
        if param.is_numerical:
            u = float(ndtr(scores[0] / (np.linalg.norm(w[0]) * _PHI_PROJECT_STD)))
            z[start] = 0.1 + 0.8 * u
        else:
            z[start : start + width] = 0.0
            z[start + int(np.argmax(scores))] = 1.0


def _derive_shape(
    family: str, z: np.ndarray, space: SearchSpace
) -> tuple[np.ndarray, np.ndarray]:
    """Curvature profile and data-size sensitivity from the trait vector.

    Like the hidden optimum coordinates, the bowl's per-dimension
    stiffness and the way growing inputs push the sweet spots around are
    fixed seeded projections of the workload's traits: jobs that behave
    alike bend alike. A quadratic with an off-center optimum is mostly
    slope over the unit range, and slopes agree between any two
    workloads wanting the same side, so numeric curvature is damped
    toward the edges to keep the surface dominated by dimensions where
    the optimum position actually shapes the ordering.
    """
    phi = _trait_vector(family, z, space)
    rng = np.random.default_rng(_SHAPE_SEED)
    curvature = np.zeros(z.size)
    sensitivity = np.zeros(z.size)
    for param, start, width in space.blocks():
        base = _BASE_CURVATURE.get(param.name, 1.0)
        base *= _FAMILY_CURVATURE[family].get(param.name, 1.0)
        w = rng.normal(size=(width + 1, phi.size))
        scores = w @ phi
        norms = np.linalg.norm(w, axis=1)
        for k in range(width):
            # stiffness varies on a longer trait scale than the optimum
            # maps do: near-kin jobs bend alike, while jobs far apart in
            # trait space weight the axes differently and so rank
            # configurations differently even where their optima agree
            u = float(ndtr(scores[k] / (norms[k] * 2.0 * _PHI_PROJECT_STD)))
            curvature[start + k] = base * (0.45 + 1.1 * u)
        if param.is_numerical:
            if param.name not in _PHI_HIDDEN:
                # data-size scaling moves the observable sweet spots
                # only; derived coordinates follow the visible ones
                u = float(ndtr(scores[width] / (norms[width] * _PHI_PROJECT_STD)))
                sensitivity[start] = SHIFT_RANGE * (2.0 * u - 1.0)
            x = min(abs(z[start] - 0.5) / 0.4, 1.0)
            curvature[start] *= CURV_EDGE_DAMP + (1.0 - CURV_EDGE_DAMP) * (
                1.0 - x * x
            )
    # one overall stiffness scale per task, also trait-tied
    g = rng.normal(size=phi.size)
    gu = float(ndtr(float(g @ phi) / (np.linalg.norm(g) * 2.0 * _PHI_PROJECT_STD)))
    curvature *= 0.6 * 2.8**gu
    return curvature, sensitivity


def _interaction_directions(
    family: str, ideal_encoded: np.ndarray, space: SearchSpace
) -> np.ndarray:
    """Coupling directions as a smooth function of the workload's traits.

    The directions are a fixed smooth map of the workload's trait vector
    (optimum position and family), so workloads with matching profiles
    bend along matching directions and workloads with distant optima do
    not. That keeps behavioral similarity tied to quantities the runtime
    metrics reflect rather than to hidden coin flips. The map projects
    the traits through random cosine features, which makes the
    correlation between two workloads' directions fall off like a
    Gaussian kernel in trait distance: near-identical for perturbed
    relatives, near-zero once optima are genuinely apart.
    """
    phi = _trait_vector(family, ideal_encoded, space)
    dim = ideal_encoded.size
    basis_rng = np.random.default_rng(_INTERACTION_BASIS_SEED)
    freq = basis_rng.normal(
        scale=1.0 / _PHI_LENGTHSCALE, size=(_PHI_FEATURE_COUNT, phi.size)
    )
    shift = basis_rng.uniform(0.0, 2.0 * np.pi, _PHI_FEATURE_COUNT)
    psi = np.sqrt(2.0 / _PHI_FEATURE_COUNT) * np.cos(freq @ phi + shift)
    basis = basis_rng.normal(size=(INTERACTION_RANK, dim, _PHI_FEATURE_COUNT))
    directions = basis @ psi
    directions[:, ~_numeric_dims(space)] *= CAT_INTERACTION_SCALE
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return directions


def make_workload(
    seed: int,
    family: str | None = None,
    base_data_size: float | None = None,
    noise_std: float = NOISE_STD,
    space: SearchSpace | None = None,
) -> SyntheticWorkload:
    """A fresh workload with an independent latent optimum."""
    rng = np.random.default_rng(seed)
    if space is None:
        space = default_space()
    if family is None:
        family = FAMILIES[int(rng.integers(len(FAMILIES)))]
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    if base_data_size is None:
        base_data_size = float(rng.uniform(4.0, 60.0))

    dim = space.encoded_dim
    z = rng.uniform(0.1, 0.9, dim)
    for param, start, width in space.blocks():
        if not param.is_numerical:
            # latent optimum is an exact choice, uniform over the block
            idx = int(rng.integers(width))
            z[start : start + width] = 0.0
            z[start + idx] = 1.0
    _derive_hidden_ideals(family, z, space)

    ideal = decode(z, space)
    z_final = encode(ideal, space)
    curvature, sensitivity = _derive_shape(family, z_final, space)
    directions = _interaction_directions(family, z_final, space)
    return SyntheticWorkload(
        workload_id=f"wl-{seed}",
        family=family,
        base_data_size=base_data_size,
        ideal=ideal,
        ideal_encoded=z_final,
        curvature=curvature,
        interaction=directions,
        context_sensitivity=sensitivity,
        noise_std=noise_std,
        space=space,
    )


def make_related_workload(
    base: SyntheticWorkload, seed: int, drift_scale: float = 0.015
) -> SyntheticWorkload:
    """A workload whose optimum sits near the base workload's optimum."""
    rng = np.random.default_rng(seed)
    space = base.space
    z = base.ideal_encoded.copy()
    numeric = _numeric_dims(space)
    z[numeric] = np.clip(
        z[numeric] + rng.normal(0.0, drift_scale, int(numeric.sum())), 0.02, 0.98
    )
    _derive_hidden_ideals(base.family, z, space)
    ideal = decode(z, space)
    z_final = encode(ideal, space)
    curvature, sensitivity = _derive_shape(base.family, z_final, space)
    return SyntheticWorkload(
        workload_id=f"{base.workload_id}-rel{seed}",
        family=base.family,
        base_data_size=float(base.base_data_size * rng.uniform(0.85, 1.2)),
        ideal=ideal,
        ideal_encoded=z_final,
        curvature=curvature,
        interaction=_interaction_directions(base.family, z_final, space),
        context_sensitivity=sensitivity,
        noise_std=base.noise_std,
        space=space,
    )


def _shifted_optimum(workload: SyntheticWorkload, data_size: float) -> np.ndarray:
    z = workload.ideal_encoded.copy()
    numeric = _numeric_dims(workload.space)
    delta = workload.context_sensitivity * (data_size / workload.base_data_size - 1.0)
    z[numeric] = np.clip(z[numeric] + delta[numeric], 0.02, 0.98)
    return z


def expected_objective(
    workload: SyntheticWorkload, config: Configuration, data_size: float | None = None
) -> float:
    """Noise-free objective in memory-hour cost units."""
    if data_size is None:
        data_size = workload.base_data_size
    z = encode(config, workload.space)
    target = _shifted_optimum(workload, data_size)
    d = z - target
    bowl = float(np.sum(workload.curvature * d * d))
    coupling = INTERACTION_WEIGHT * float(np.sum((workload.interaction @ d) ** 2))
    return COST_PER_GB * data_size * (1.0 + bowl + coupling)


def _objective_on_encoded(
    workload: SyntheticWorkload, Z: np.ndarray, target: np.ndarray, data_size: float
) -> np.ndarray:
    D = Z - target[None, :]
    bowl = (D * D) @ workload.curvature
    coupling = INTERACTION_WEIGHT * np.sum((D @ workload.interaction.T) ** 2, axis=1)
    return COST_PER_GB * data_size * (1.0 + bowl + coupling)


def compute_metrics(
    workload: SyntheticWorkload, config: Configuration, data_size: float | None = None
) -> RuntimeMetrics:
    """Deterministic runtime metrics for one execution.

    Every observable workload trait leaves a dominant trace in at least
    one channel: scan splitting in the input-stage time and task count,
    shuffle sizing in the shuffle-stage time, shuffle volume and the
    memory duty cycle, executor demand in the executor count and io
    volume, memory appetite in the usage ratios, spill and GC, core
    preference in the task-stage time, and the stage structure in the
    stage count. A task's identity has to be recoverable from these
    numbers alone, the way an event log fingerprints a real job.
    """
    if data_size is None:
        data_size = workload.base_data_size
    family = workload.family
    ideal = workload.ideal

    def softcap(x: float, cap: float) -> float:
        # saturate smoothly: exact below 60% of the cap, then compress
        # asymptotically, so heavy overload still moves the needle a little
        knee = 0.6 * cap
        if x <= knee:
            return max(x, 0.0)
        return knee + (cap - knee) * float(np.tanh((x - knee) / (cap - knee)))

    # encoded optimum coordinates, one number per knob, used to shade
    # channels that in a real log would reflect the job's preferences
    z = workload.ideal_encoded
    u = {}
    for param, start, width in workload.space.blocks():
        if param.is_numerical:
            u[param.name] = float(z[start])
        else:
            u[param.name] = float(np.argmax(z[start : start + width])) / (width - 1)

    mpb = float(config["spark.sql.files.maxPartitionBytes"])
    mpb_ideal = float(ideal["spark.sql.files.maxPartitionBytes"])
    partitions = float(config["spark.sql.adaptive.maxNumPostShufflePartitions"])
    partitions_ideal = float(ideal["spark.sql.adaptive.maxNumPostShufflePartitions"])
    max_execs = float(config["spark.dynamicAllocation.maxExecutors"])
    max_execs_ideal = float(ideal["spark.dynamicAllocation.maxExecutors"])
    cores = float(config["spark.executor.cores"])
    cores_ideal = float(ideal["spark.executor.cores"])
    mem = float(config["spark.executor.memory"])
    mem_ideal = float(ideal["spark.executor.memory"])
    overhead = float(config["spark.executor.memoryOverhead"])
    driver_mem = float(config["spark.driver.memory"])
    driver_mem_ideal = float(ideal["spark.driver.memory"])

    input_rt = 0.283 * _INPUT_AMPLITUDE[family] * float(np.sqrt(mpb / mpb_ideal))
    shuffle_rt = (
        0.7 * _SHUFFLE_AMPLITUDE[family] * float(np.sqrt(partitions_ideal / partitions))
    )
    tasks_rt = 0.2357 * (cores_ideal / cores)

    def demand_response(ratio: float) -> float:
        # under-provisioning past nominal shows up logarithmically: paging,
        # retries and spill soak up most of the gap before usage counters do
        if ratio <= 1.0:
            return ratio
        return 1.0 + 0.55 * float(np.log(ratio))

    pressure = demand_response(mem_ideal / mem)
    max_mem = softcap(0.82 * pressure, 2.0)
    avg_mem = softcap(
        max_mem * (0.55 + 0.35 * u["spark.sql.adaptive.maxNumPostShufflePartitions"]),
        2.0,
    )

    driver_pressure = demand_response(driver_mem_ideal / driver_mem)
    max_driver = softcap(0.82 * driver_pressure, 2.0)
    avg_driver = softcap(
        max_driver * (0.55 + 0.35 * u["spark.sql.files.maxPartitionBytes"]),
        2.0,
    )

    # dynamic allocation ramps to the job's demand, capped by the knob
    executor_count = float(min(max_execs, round(1.15 * max_execs_ideal) + 1))
    total_memory = (mem + overhead / 1024.0) * executor_count

    # the remaining descriptors carry the workload's cost-sensitivity
    # profile: memory-bound jobs spill and GC more, scan-bound jobs split
    # into more tasks, driver-bound jobs run deeper DAGs; no rule
    # condition reads the sensitivity terms
    shares = _sensitivity_shares(workload)
    w_mpb = shares["spark.sql.files.maxPartitionBytes"]
    w_emem = shares["spark.executor.memory"]
    w_ecores = shares["spark.executor.cores"]
    w_driver = shares["spark.driver.memory"] + shares["spark.driver.cores"]
    w_oh = (
        shares["spark.executor.memoryOverhead"]
        + shares["spark.driver.memoryOverhead"]
    )

    output_gb = (
        data_size * _OUTPUT_FRACTION[family] * (0.6 + 0.8 * u["spark.vcore.boost.ratio"])
    )
    shuffle_gb = (
        data_size
        * _SHUFFLE_FRACTION[family]
        * (0.4 + 1.2 * u["spark.sql.adaptive.maxNumPostShufflePartitions"])
    )
    spill_gb = data_size * (
        0.05 + 0.3 * max(0.0, pressure - 1.0) + 0.2 * w_emem + 0.15 * w_oh
    )
    io_gb = (
        data_size * (0.8 + 0.6 * u["spark.dynamicAllocation.maxExecutors"])
        + output_gb
        + 2.0 * shuffle_gb
    )
    task_count = max(
        1.0,
        data_size * 2.0**30 / float(np.sqrt(mpb * mpb_ideal)) * (0.7 + 0.6 * w_mpb),
    )
    stage_count = _STAGE_COUNT[family] + round(8.0 * w_driver)
    gc = softcap(
        0.05
        + 0.2 * max(0.0, pressure - 0.9)
        + 0.15 * w_emem
        + 0.1 * w_ecores
        + 0.1 * (cores_ideal / 4.0),
        0.6,
    )

    return RuntimeMetrics(
        stage_max_avg_input_run_time=input_rt,
        stage_max_avg_tasks_run_time=tasks_rt,
        stage_max_avg_shuffle_read_run_time=shuffle_rt,
        max_mem_usage=max_mem,
        avg_mem_usage=avg_mem,
        max_driver_mem_usage=max_driver,
        avg_driver_mem_usage=avg_driver,
        total_memory=total_memory,
        input_size_gb=data_size,
        output_size_gb=output_gb,
        shuffle_volume_gb=shuffle_gb,
        spill_volume_gb=spill_gb,
        io_volume_gb=io_gb,
        task_count=task_count,
        stage_count=float(stage_count),
        executor_count=executor_count,
        gc_fraction=gc,
    )


def execute(
    workload: SyntheticWorkload,
    config: Configuration,
    context: ContextVector | None = None,
    rng: np.random.Generator | None = None,
) -> ExecutionResult:
    """Run one configuration; noise applies to the objective only."""
    violations = validate(config, workload.space)
    if violations:
        raise SpaceError("; ".join(violations))
    if context is None:
        context = ContextVector(data_size=workload.base_data_size)
    data_size = context.data_size
    objective = expected_objective(workload, config, data_size)
    if rng is not None and workload.noise_std > 0:
        objective *= 1.0 + float(rng.normal(0.0, workload.noise_std))
    metrics = compute_metrics(workload, config, data_size)
    mem = float(config["spark.executor.memory"])
    overhead = float(config["spark.executor.memoryOverhead"])
    driver = float(config["spark.driver.memory"])
    driver_oh = float(config["spark.driver.memoryOverhead"])
    avg_gb = (
        (mem + overhead / 1024.0) * metrics.executor_count * 0.7
        + driver
        + driver_oh / 1024.0
    )
    runtime_s = objective * 3600.0 / avg_gb
    return ExecutionResult(
        objective=objective,
        runtime_s=runtime_s,
        avg_memory_gb=avg_gb,
        metrics=metrics,
        context=context,
    )


def observe(
    workload: SyntheticWorkload,
    config: Configuration,
    context: ContextVector,
    rng: np.random.Generator | None = None,
) -> Observation:
    """Execute and package the result as a tuner observation."""
    result = execute(workload, config, context=context, rng=rng)
    return Observation(
        config=config,
        objective=result.objective,
        context=context,
        metrics=result.metrics,
    )


# ------------------------------------------------------------------- optimum


def true_optimum(
    workload: SyntheticWorkload,
    context: ContextVector | None = None,
    max_sweeps: int = 200,
) -> tuple[Configuration, float]:
    """Best achievable configuration and its noise-free objective.

    Enumerates categorical choices (falling back to sampling if the
    product is large) and minimizes the numeric coordinates exactly by
    coordinate descent in the encoded space.
    """
    data_size = context.data_size if context else workload.base_data_size
    space = workload.space
    target = _shifted_optimum(workload, data_size)
    numeric_idx = [start for p, start, _ in space.blocks() if p.is_numerical]
    cat_blocks = [
        (start, width) for p, start, width in space.blocks() if not p.is_numerical
    ]

    combos: list[tuple[int, ...]]
    sizes = [w for _, w in cat_blocks]
    if not sizes:
        combos = [()]
    elif math.prod(sizes) <= 256:
        combos = list(itertools.product(*[range(w) for w in sizes]))
    else:
        rng = np.random.default_rng(0)
        combos = [tuple(int(rng.integers(w)) for w in sizes) for _ in range(256)]

    c = workload.curvature
    V = workload.interaction
    best_z: np.ndarray | None = None
    best_f = math.inf
    for combo in combos:
        z = np.clip(target.copy(), 0.0, 1.0)
        for (start, width), idx in zip(cat_blocks, combo):
            z[start : start + width] = 0.0
            z[start + idx] = 1.0
        for _ in range(max_sweeps):
            moved = 0.0
            for i in numeric_idx:
                d = z - target
                # cost along coordinate i is quadratic: minimize exactly
                s_other = V @ d - V[:, i] * d[i]
                denom = c[i] + INTERACTION_WEIGHT * float(V[:, i] @ V[:, i])
                if denom <= 0:
                    new_d = 0.0
                else:
                    new_d = -INTERACTION_WEIGHT * float(V[:, i] @ s_other) / denom
                new_z = float(np.clip(target[i] + new_d, 0.0, 1.0))
                moved = max(moved, abs(new_z - z[i]))
                z[i] = new_z
            if moved < 1e-12:
                break
        f = float(_objective_on_encoded(workload, z[None, :], target, data_size)[0])
        if f < best_f:
            best_f = f
            best_z = z

    best_config = decode(best_z, space)
    return best_config, expected_objective(workload, best_config, data_size)


# --------------------------------------------------------------------- drift


def data_size_on_day(workload: SyntheticWorkload, day: float) -> float:
    """Slow growth plus a weekly cycle; day 0 is the base size."""
    return workload.base_data_size * (
        1.0 + 0.02 * day + 0.1 * math.sin(2.0 * math.pi * day / 7.0)
    )


def drift(workload: SyntheticWorkload, day: float) -> ContextVector:
    """The running context of the workload on a given day (deterministic)."""
    if day < 0:
        raise ValueError(f"day must be >= 0, got {day}")
    cluster_load = 0.5 + 0.3 * math.sin(2.0 * math.pi * day / 5.0 + 1.0)
    io_pressure = 0.4 + 0.2 * math.cos(2.0 * math.pi * day / 11.0)
    return ContextVector(
        data_size=data_size_on_day(workload, day),
        extra=(cluster_load, io_pressure),
    )


def make_task_corpus(
    n_clusters: int,
    cluster_size: int,
    seed: int = 0,
    space: SearchSpace | None = None,
    drift_range: tuple[float, float] = (0.01, 0.12),
) -> list[list[SyntheticWorkload]]:
    """Clusters of related workloads; tasks across clusters are unrelated.

    Every cluster member drifts from the cluster's base workload by its
    own scale, drawn log-uniformly from `drift_range`, so one cluster
    holds near-clones and distant cousins at once. A corpus built this
    way exercises the whole similarity scale instead of just its two
    ends.
    """
    if space is None:
        space = default_space()
    rng = np.random.default_rng(seed)
    lo, hi = drift_range
    corpus = []
    for i in range(n_clusters):
        base = make_workload(int(rng.integers(1, 2**31)), space=space)
        cluster = [base]
        for _ in range(cluster_size - 1):
            drift = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
            cluster.append(
                make_related_workload(base, int(rng.integers(1, 2**31)), drift_scale=drift)
            )
        corpus.append(cluster)
    return corpus
