"""Runtime metrics reported by one workload execution.

Seventeen named quantities in a fixed order. Ratio metrics (memory usage)
live in [0, 2]; time metrics are non-negative. The vector form feeds
meta-feature computation; named access feeds the rule engine.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Any, Mapping

import numpy as np

METRIC_NAMES: tuple[str, ...] = (
    "stage_max_avg_input_run_time",
    "stage_max_avg_tasks_run_time",
    "stage_max_avg_shuffle_read_run_time",
    "max_mem_usage",
    "avg_mem_usage",
    "max_driver_mem_usage",
    "avg_driver_mem_usage",
    "total_memory",
    "input_size_gb",
    "output_size_gb",
    "shuffle_volume_gb",
    "spill_volume_gb",
    "io_volume_gb",
    "task_count",
    "stage_count",
    "executor_count",
    "gc_fraction",
)

DATA_BOUND_METRICS: tuple[str, ...] = (
    "output_size_gb",
    "shuffle_volume_gb",
    "spill_volume_gb",
    "io_volume_gb",
    "task_count",
)
"""Channels that grow with the job's input volume.

Comparing two jobs on these raw values mostly compares how much data they
read.  Dividing by ``input_size_gb`` first turns them into per-gigabyte
intensities that reflect how the job behaves rather than how big it is.
"""

_USAGE_RATIOS = (
    "max_mem_usage",
    "avg_mem_usage",
    "max_driver_mem_usage",
    "avg_driver_mem_usage",
)


@dataclass(frozen=True)
class RuntimeMetrics:
    stage_max_avg_input_run_time: float
    stage_max_avg_tasks_run_time: float
    stage_max_avg_shuffle_read_run_time: float
    max_mem_usage: float
    avg_mem_usage: float
    max_driver_mem_usage: float
    avg_driver_mem_usage: float
    total_memory: float
    input_size_gb: float
    output_size_gb: float
    shuffle_volume_gb: float
    spill_volume_gb: float
    io_volume_gb: float
    task_count: float
    stage_count: float
    executor_count: float
    gc_fraction: float

    def __post_init__(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(float(v)):
                raise ValueError(f"metric {f.name} must be finite, got {v!r}")
            if float(v) < 0.0:
                raise ValueError(f"metric {f.name} must be >= 0, got {v!r}")
        for name in _USAGE_RATIOS:
            v = float(getattr(self, name))
            if v > 2.0:
                raise ValueError(f"metric {name} must be <= 2.0, got {v!r}")

    def as_vector(self) -> np.ndarray:
        """Metric values in METRIC_NAMES order."""
        return np.array([float(getattr(self, n)) for n in METRIC_NAMES])

    def get(self, name: str) -> float:
        if name not in METRIC_NAMES:
            raise KeyError(name)
        return float(getattr(self, name))

    def to_document(self) -> dict[str, float]:
        return {n: float(getattr(self, n)) for n in METRIC_NAMES}

    @classmethod
    def from_document(cls, doc: Mapping[str, Any]) -> "RuntimeMetrics":
        missing = [n for n in METRIC_NAMES if n not in doc]
        if missing:
            raise ValueError(f"metrics document missing {missing}")
        return cls(**{n: float(doc[n]) for n in METRIC_NAMES})

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> "RuntimeMetrics":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (len(METRIC_NAMES),):
            raise ValueError(f"expected {len(METRIC_NAMES)} metrics, got {vec.shape}")
        return cls(**dict(zip(METRIC_NAMES, map(float, vec))))


def neutral_metrics(**overrides: float) -> RuntimeMetrics:
    """A metrics instance with mid-band values that trigger no shipped rule.

    Convenient base for tests and fixtures; override individual fields to
    steer specific rules.
    """
    base = {
        "stage_max_avg_input_run_time": 0.3,
        "stage_max_avg_tasks_run_time": 0.25,
        "stage_max_avg_shuffle_read_run_time": 0.5,
        "max_mem_usage": 0.8,
        "avg_mem_usage": 0.65,
        "max_driver_mem_usage": 0.7,
        "avg_driver_mem_usage": 0.55,
        "total_memory": 50.0,
        "input_size_gb": 100.0,
        "output_size_gb": 30.0,
        "shuffle_volume_gb": 35.0,
        "spill_volume_gb": 0.0,
        "io_volume_gb": 200.0,
        "task_count": 800.0,
        "stage_count": 4.0,
        "executor_count": 20.0,
        "gc_fraction": 0.05,
    }
    base.update(overrides)
    return RuntimeMetrics(**base)
