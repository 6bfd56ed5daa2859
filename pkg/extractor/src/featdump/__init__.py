"""Dump MLP-head activations of a two-stage detector into feature files
the box-monitor toolchain consumes."""

from .bamf import (
    LABEL_ID,
    LABEL_OOD,
    LABEL_UNLABELED,
    DumpRecord,
    read_dump,
    write_dump,
)
from .detectors import (
    HOOK_POINTS,
    DetectorAdapter,
    MissingHookError,
    Proposal,
    StubTwoStageDetector,
    load_detector,
)
from .extract import (
    DEFAULT_SCORE_FLOOR,
    ExtractionConfig,
    ExtractionSummary,
    extract,
    micro_f1_threshold,
)
from .matching import IOU_THRESHOLD, iou, match_predictions

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_SCORE_FLOOR",
    "DetectorAdapter",
    "DumpRecord",
    "ExtractionConfig",
    "ExtractionSummary",
    "HOOK_POINTS",
    "IOU_THRESHOLD",
    "LABEL_ID",
    "LABEL_OOD",
    "LABEL_UNLABELED",
    "MissingHookError",
    "Proposal",
    "StubTwoStageDetector",
    "extract",
    "iou",
    "load_detector",
    "match_predictions",
    "micro_f1_threshold",
    "read_dump",
    "write_dump",
]
