"""Black-box tuning for Spark SQL configurations.

Combines expert tuning rules, Gaussian-process surrogates, and transfer
from previously tuned workloads behind a suggest/observe protocol, with
an HTTP service and a synthetic workload simulator for benchmarks.
"""
from .acquisition import (
    CandidatePool,
    expected_improvement,
    expected_improvement_batch,
    generate_candidates,
    select_by_ei,
)
from .gp import (
    ContextVector,
    GpSurrogate,
    KernelParams,
    Observation,
    concordant_pair_count,
    cross_validated_means,
    fit,
    generalization_weight,
    matern52,
)
from .metrics import METRIC_NAMES, RuntimeMetrics, neutral_metrics
from .rules import (
    ExpertRule,
    RuleEvaluationError,
    RuleParseError,
    RuleSet,
    apply_rules,
    apply_rules_explain,
    default_rules,
    eval_condition,
    expert_init_suggest,
    parse_condition,
    parse_quantity,
    parse_ruleset,
)
from .space import (
    Configuration,
    ParameterDef,
    SearchSpace,
    SpaceError,
    decode,
    default_configurations,
    default_space,
    encode,
    mutate,
    sample_neighborhood,
    sample_uniform,
    validate,
)
from .store import IntegrityError, TaskStore
from .transfer import (
    Ensemble,
    SimilarityModel,
    TaskRecord,
    build_ensemble,
    build_training_set,
    combined_rank,
    combined_rank_select,
    ensemble_generalization_weight,
    filter_tasks,
    member_pair_counts,
    pairwise_similarity,
    record_task,
    score_tasks,
    task_meta_features,
    task_weights,
    train_similarity_model,
)
from .tuner import Budget, ProtocolError, Suggestion, Tuner, arbitration_probability, expert_weight

__version__ = "0.1.0"

__all__ = [
    "Budget",
    "CandidatePool",
    "Configuration",
    "ContextVector",
    "Ensemble",
    "ExpertRule",
    "GpSurrogate",
    "IntegrityError",
    "KernelParams",
    "METRIC_NAMES",
    "Observation",
    "ParameterDef",
    "ProtocolError",
    "RuleEvaluationError",
    "RuleParseError",
    "RuleSet",
    "RuntimeMetrics",
    "SearchSpace",
    "SimilarityModel",
    "SpaceError",
    "Suggestion",
    "TaskRecord",
    "TaskStore",
    "Tuner",
    "apply_rules",
    "apply_rules_explain",
    "arbitration_probability",
    "build_ensemble",
    "build_training_set",
    "combined_rank",
    "combined_rank_select",
    "ensemble_generalization_weight",
    "concordant_pair_count",
    "cross_validated_means",
    "decode",
    "default_configurations",
    "default_rules",
    "default_space",
    "encode",
    "eval_condition",
    "expected_improvement",
    "expected_improvement_batch",
    "expert_init_suggest",
    "expert_weight",
    "filter_tasks",
    "fit",
    "generalization_weight",
    "generate_candidates",
    "matern52",
    "member_pair_counts",
    "mutate",
    "neutral_metrics",
    "parse_condition",
    "parse_quantity",
    "parse_ruleset",
    "pairwise_similarity",
    "record_task",
    "sample_neighborhood",
    "sample_uniform",
    "score_tasks",
    "select_by_ei",
    "task_meta_features",
    "task_weights",
    "train_similarity_model",
    "validate",
]
