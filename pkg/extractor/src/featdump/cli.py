"""featdump: run a detector over images, dump head activations.

Images may be .npy arrays (HxWx3) or regular image files (needs Pillow).
Annotations are a JSON file mapping image ids (file stem) to
{"boxes": [[x1,y1,x2,y2], ...], "labels": ["car", ...]}.
"""

from __future__ import annotations

import argparse
import glob
import json
import sys
from pathlib import Path

import numpy as np

from .detectors import MissingHookError, HOOK_POINTS
from .extract import DEFAULT_SCORE_FLOOR, ExtractionConfig, extract


def _load_image(path: Path) -> np.ndarray:
    if path.suffix == ".npy":
        return np.load(path)
    try:
        from PIL import Image
    except ImportError as exc:
        raise RuntimeError(
            f"Pillow is needed to read {path.name}; install featdump[images] "
            "or supply .npy arrays"
        ) from exc
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def _collect_images(patterns) -> dict[str, np.ndarray]:
    images = {}
    for pattern in patterns:
        paths = sorted(glob.glob(pattern)) or [pattern]
        for name in paths:
            path = Path(name)
            if not path.exists():
                raise FileNotFoundError(f"image not found: {name}")
            images[path.stem] = _load_image(path)
    return images


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="featdump", description=__doc__)
    parser.add_argument("--model", default="stub",
                        help="model spec, e.g. stub or stub:8:3 "
                             "(stub:<head_width>:<seed>)")
    parser.add_argument("--weights", default=None,
                        help="optional state-dict path overriding the "
                             "model's parameters")
    parser.add_argument("--layer", default="FC2Relu", choices=list(HOOK_POINTS),
                        help="hook point to capture")
    parser.add_argument("--images", nargs="+", required=True,
                        help="image paths or globs (.npy, .png, .jpg)")
    parser.add_argument("--annotations", default=None,
                        help="ground-truth JSON; matched predictions get the "
                             "ID label")
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--score-threshold", type=float, default=None,
                       dest="score_threshold",
                       help="drop predictions below this confidence")
    group.add_argument("--auto-threshold", action="store_true",
                       help="use the micro-F1 maximizing threshold "
                            "(needs --annotations)")
    parser.add_argument("--score-floor", type=float, default=DEFAULT_SCORE_FLOOR,
                        dest="score_floor",
                        help="minimum confidence ever considered "
                             f"(default {DEFAULT_SCORE_FLOOR})")
    parser.add_argument("--device", default="cpu",
                        help="inference device (the stub runs on cpu)")
    parser.add_argument("--out", required=True, help="dump file to write")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        images = _collect_images(args.images)
        annotations = None
        if args.annotations:
            annotations = json.loads(Path(args.annotations).read_text())
        config = ExtractionConfig(
            model_spec=args.model,
            weights=args.weights,
            layer=args.layer,
            score_threshold=args.score_threshold,
            auto_threshold=args.auto_threshold,
            score_floor=args.score_floor,
            device=args.device,
            output=args.out,
        )
        summary = extract(config, images, annotations)
    except (MissingHookError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"featdump: error: {exc}", file=sys.stderr)
        return 2
    flag = " (degenerate)" if summary.threshold_degenerate else ""
    print(f"dump written: {args.out}")
    print(f"layer_tag={summary.layer_tag} dimension={summary.dimension} "
          f"records={summary.records_written} images={summary.images}")
    print(f"threshold={summary.threshold_used:g}{flag} "
          f"predictions_seen={summary.predictions_seen}")
    for key, count in summary.per_class.items():
        print(f"  class {key}: {count}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
