"""Box-abstraction runtime monitors for out-of-distribution detection.

Build per-class unions of axis-aligned boxes around a detector's
in-distribution feature vectors, then accept or reject new detections by
containment; the minimum box distance doubles as the OoD score.
"""

from .bench import BenchReport, bench_throughput
from .clustering import ClusterConfig, Partition, kmeans, partition_features, select_k
from .errors import (
    BoxmonError,
    DimensionMismatchError,
    EmptyClassError,
    EmptyInputError,
    InvalidIntervalError,
    InvariantViolationError,
    ResourceLimitError,
    SchemaError,
)
from .estimator import BoxEnvelope
from .evaluation import (
    EvalOutcome,
    EvalReport,
    GaussianMonitor,
    ThresholdChoice,
    evaluate_registry,
    fpr_at_tpr,
    micro_f1_threshold,
    registry_distances,
)
from .features import FeatureRecord, FeatureSet, Label
from .formats import (
    load_registry,
    read_bamf,
    read_csv,
    read_features,
    registry_to_json_bytes,
    save_registry,
    write_bamf,
    write_csv,
)
from .geometry import Box, interval_distance, tight_box
from .monitor import (
    BuildConfig,
    BuildMeta,
    ClassMonitor,
    Decision,
    MonitorRegistry,
    Verdict,
    build_class_monitor,
    build_registry,
    enlarge_to_tpr,
)
from .synth import SynthConfig, SynthPreset, synth_generate

__version__ = "0.1.0"

__all__ = [
    "BenchReport",
    "Box",
    "BoxEnvelope",
    "BoxmonError",
    "BuildConfig",
    "BuildMeta",
    "ClassMonitor",
    "ClusterConfig",
    "Decision",
    "DimensionMismatchError",
    "EmptyClassError",
    "EmptyInputError",
    "EvalOutcome",
    "EvalReport",
    "FeatureRecord",
    "FeatureSet",
    "GaussianMonitor",
    "InvalidIntervalError",
    "InvariantViolationError",
    "Label",
    "MonitorRegistry",
    "Partition",
    "ResourceLimitError",
    "SchemaError",
    "SynthConfig",
    "SynthPreset",
    "ThresholdChoice",
    "Verdict",
    "bench_throughput",
    "build_class_monitor",
    "build_registry",
    "enlarge_to_tpr",
    "evaluate_registry",
    "fpr_at_tpr",
    "interval_distance",
    "kmeans",
    "load_registry",
    "micro_f1_threshold",
    "partition_features",
    "read_bamf",
    "read_csv",
    "read_features",
    "registry_distances",
    "registry_to_json_bytes",
    "save_registry",
    "select_k",
    "synth_generate",
    "tight_box",
    "write_bamf",
    "write_csv",
]
