"""Block-wise decoding for masked diffusion language models, desk scale.

The engine partitions the generation region into blocks at entropy-shift
boundaries and unmasks each block in parallel under an entropy-tracking
confidence threshold. A planted-constituent synthetic model with exactly
computable marginals makes every piece testable end to end on a laptop.
"""
from __future__ import annotations

from .core import (
    CACHE_MODES,
    PARTITION_MODES,
    PROB_SUM_TOL,
    THRESHOLD_MODES,
    BackendFaultError,
    ConfigError,
    ContractViolationError,
    DecodeConfig,
    ModelBackend,
    PositionDistribution,
    SequenceState,
    UnreachableStateError,
    Vocab,
    apply_unmask,
    argmax_token,
    confidence,
)
from .decoder import (
    DecodeMetrics,
    DecodeResult,
    account_forward,
    decode,
    decode_baseline_full_diffusion,
)
from .entropy import (
    ZERO_MASS,
    EntropyProfile,
    ShiftProfile,
    block_mean_entropy,
    entropy_profile,
    entropy_shifts,
    shannon_entropy,
)
from .harness import (
    ARM_NAMES,
    ExperimentRow,
    aggregate_matrix,
    analyze_profiles,
    arm_config,
    check_trace_consistency,
    comparison_matrix,
    detected_boundaries,
    first_divergence,
    recompute_metrics,
    run_arm,
)
from .partition import (
    Block,
    PartitionState,
    adaptive_boundary,
    fixed_boundary,
    make_block,
)
from .synth import (
    SEPARABLE_RATIO,
    BoundaryContrast,
    Constituent,
    PlantedCorpusSpec,
    SynthBackend,
    boundary_contrast,
    generate_spec,
    load_spec,
    make_comparison_spec,
    ml_completion,
    normalized_weights,
    planted_boundaries,
    save_spec,
    synth_distributions,
)
from .threshold import MEAN_FLOOR, ThresholdPolicy, dynamic_tau, select_unmask
from .trace import (
    DecodeTrace,
    TraceError,
    TraceEvent,
    canonical_json,
    parse_trace_line,
    read_trace,
    serialize_event,
    validate_trace,
    write_trace,
)

__version__ = "0.1.0"

__all__ = [
    "ARM_NAMES",
    "CACHE_MODES",
    "MEAN_FLOOR",
    "PARTITION_MODES",
    "PROB_SUM_TOL",
    "SEPARABLE_RATIO",
    "THRESHOLD_MODES",
    "ZERO_MASS",
    "BackendFaultError",
    "Block",
    "BoundaryContrast",
    "ConfigError",
    "Constituent",
    "ContractViolationError",
    "DecodeConfig",
    "DecodeMetrics",
    "DecodeResult",
    "DecodeTrace",
    "EntropyProfile",
    "ExperimentRow",
    "ModelBackend",
    "PartitionState",
    "PlantedCorpusSpec",
    "PositionDistribution",
    "SequenceState",
    "ShiftProfile",
    "SynthBackend",
    "ThresholdPolicy",
    "TraceError",
    "TraceEvent",
    "UnreachableStateError",
    "Vocab",
    "account_forward",
    "adaptive_boundary",
    "aggregate_matrix",
    "analyze_profiles",
    "apply_unmask",
    "argmax_token",
    "arm_config",
    "block_mean_entropy",
    "boundary_contrast",
    "canonical_json",
    "check_trace_consistency",
    "comparison_matrix",
    "confidence",
    "decode",
    "decode_baseline_full_diffusion",
    "detected_boundaries",
    "dynamic_tau",
    "entropy_profile",
    "entropy_shifts",
    "first_divergence",
    "fixed_boundary",
    "generate_spec",
    "load_spec",
    "make_block",
    "make_comparison_spec",
    "ml_completion",
    "normalized_weights",
    "parse_trace_line",
    "planted_boundaries",
    "read_trace",
    "recompute_metrics",
    "run_arm",
    "save_spec",
    "select_unmask",
    "serialize_event",
    "shannon_entropy",
    "synth_distributions",
    "validate_trace",
    "write_trace",
]
