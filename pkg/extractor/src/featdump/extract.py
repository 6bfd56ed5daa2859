"""Extraction loop: images -> per-proposal head activations -> dump file.

One record per surviving prediction: the predicted class as the key, the
prediction confidence as the score, the hooked activation vector as the
payload, and the ID label exactly when the prediction matches a provided
ground-truth box (same class, IoU >= 0.5); everything else stays
UNLABELED so the monitor builder downstream decides what participates.

By default everything above a low score floor is dumped and threshold
experiments happen at build time; an explicit threshold, or the micro-F1
maximizing one (requires ground truth), can filter at extraction time
instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .bamf import LABEL_ID, LABEL_UNLABELED, DumpRecord, write_dump
from .detectors import DetectorAdapter, load_detector
from .matching import match_predictions

DEFAULT_SCORE_FLOOR = 0.05


@dataclass(frozen=True)
class ExtractionConfig:
    """What to run, where to hook, and how to filter."""

    model_spec: str = "stub"
    weights: str | None = None
    layer: str = "FC2Relu"
    score_threshold: float | None = None  # None: dump everything above the floor
    auto_threshold: bool = False  # micro-F1 sweep; needs annotations
    score_floor: float = DEFAULT_SCORE_FLOOR
    device: str = "cpu"
    output: str = "features.bamf"


@dataclass
class ExtractionSummary:
    layer_tag: str
    dimension: int
    records_written: int
    images: int
    predictions_seen: int
    threshold_used: float
    threshold_degenerate: bool = False
    per_class: dict = field(default_factory=dict)


def micro_f1_threshold(scored, total_ground_truth, epsilon=1e-6):
    """Confidence cutoff maximizing micro F1 over (score, is_tp) pairs.

    Same sweep rule the monitor builder documents: candidates are the
    distinct scores, lowest wins ties; when nothing is ever a true
    positive the threshold lands just above the top score and is flagged.
    """
    pairs = [(float(s), bool(t)) for s, t in scored]
    if not pairs:
        raise ValueError("micro_f1_threshold needs at least one scored entry")
    tp_total = sum(1 for _, t in pairs if t)
    if total_ground_truth < tp_total:
        raise ValueError(
            f"total_ground_truth {total_ground_truth} below {tp_total} matches"
        )
    best_f1, best_t = -1.0, None
    for t in sorted({s for s, _ in pairs}):
        tp = sum(1 for s, is_tp in pairs if is_tp and s >= t)
        fp = sum(1 for s, is_tp in pairs if not is_tp and s >= t)
        fn = total_ground_truth - tp
        denom = 2 * tp + fp + fn
        f1 = (2 * tp / denom) if denom else 0.0
        if f1 > best_f1:
            best_f1, best_t = f1, t
    if best_f1 <= 0.0:
        return max(s for s, _ in pairs) + epsilon, True
    return best_t, False


def extract(
    config: ExtractionConfig,
    images: dict[str, np.ndarray],
    annotations: dict | None = None,
    detector: DetectorAdapter | None = None,
) -> ExtractionSummary:
    """Run the detector over every image and write one dump file.

    ``images`` maps an image id to an HxWx3 array (iterated in sorted id
    order, so runs are reproducible). ``annotations`` optionally maps the
    same ids to ``{"boxes": [[x1,y1,x2,y2],...], "labels": [...]}``.
    """
    if not images:
        raise ValueError("no images to extract from")
    torch.manual_seed(0)  # inference is eval-mode; belt and braces
    model = detector if detector is not None else load_detector(
        config.model_spec, config.weights
    )
    if config.layer not in model.hook_points():
        raise ValueError(
            f"layer {config.layer!r} is not a hook point; "
            f"available: {', '.join(model.hook_points())}"
        )
    rows = []  # (image_id, class_key, score, activation, box)
    dimension = None
    total_gt = 0
    for image_id in sorted(images):
        for prop in model.detect(images[image_id], config.layer):
            if prop.score < config.score_floor:
                continue
            if dimension is None:
                dimension = prop.activation.size
            elif prop.activation.size != dimension:
                raise ValueError(
                    f"activation dimension drifted from {dimension} to "
                    f"{prop.activation.size} on image {image_id!r}"
                )
            rows.append((image_id, prop.class_key, prop.score, prop.activation, prop.box))
    matched = np.zeros(len(rows), dtype=bool)
    if annotations:
        for image_id, entry in annotations.items():
            total_gt += len(entry.get("boxes", []))
        for image_id in sorted(images):
            entry = annotations.get(image_id)
            if not entry or not entry.get("boxes"):
                continue
            idx = [i for i, row in enumerate(rows) if row[0] == image_id]
            if not idx:
                continue
            local = match_predictions(
                [rows[i][4] for i in idx],
                [rows[i][1] for i in idx],
                [rows[i][2] for i in idx],
                entry["boxes"],
                [str(l) for l in entry["labels"]],
            )
            for i, hit in zip(idx, local):
                matched[i] = hit

    degenerate = False
    if config.auto_threshold:
        if not annotations:
            raise ValueError("--auto-threshold needs ground-truth annotations")
        threshold, degenerate = micro_f1_threshold(
            [(score, matched[i]) for i, (_, _, score, _, _) in enumerate(rows)],
            total_gt,
        )
    elif config.score_threshold is not None:
        threshold = config.score_threshold
    else:
        threshold = config.score_floor

    records = []
    per_class: dict[str, int] = {}
    for i, (_, class_key, score, activation, _) in enumerate(rows):
        if score < threshold:
            continue
        label = LABEL_ID if matched[i] else LABEL_UNLABELED
        records.append(DumpRecord(class_key, label, score, activation))
        per_class[class_key] = per_class.get(class_key, 0) + 1
    if dimension is None:
        # zero predictions anywhere: derive the width from a probe forward
        probe_id = sorted(images)[0]
        probe = model.detect(images[probe_id], config.layer)
        dimension = probe[0].activation.size if probe else 1
    count = write_dump(config.output, config.layer, dimension, records)
    return ExtractionSummary(
        layer_tag=config.layer,
        dimension=dimension,
        records_written=count,
        images=len(images),
        predictions_seen=len(rows),
        threshold_used=float(threshold),
        threshold_degenerate=degenerate,
        per_class=dict(sorted(per_class.items())),
    )
