"""Ground-truth matching: IoU >= 0.5 with an unmatched same-class box."""

from __future__ import annotations

import numpy as np

IOU_THRESHOLD = 0.5


def iou(box_a, box_b) -> float:
    ax1, ay1, ax2, ay2 = box_a
    bx1, by1, bx2, by2 = box_b
    ix1, iy1 = max(ax1, bx1), max(ay1, by1)
    ix2, iy2 = min(ax2, bx2), min(ay2, by2)
    iw, ih = max(0.0, ix2 - ix1), max(0.0, iy2 - iy1)
    inter = iw * ih
    if inter == 0.0:
        return 0.0
    area_a = (ax2 - ax1) * (ay2 - ay1)
    area_b = (bx2 - bx1) * (by2 - by1)
    return inter / (area_a + area_b - inter)


def match_predictions(pred_boxes, pred_keys, pred_scores, gt_boxes, gt_keys) -> np.ndarray:
    """Greedy matching by descending score; one prediction per truth box.

    Returns a boolean mask: True where a prediction found an unmatched
    ground-truth box of the same class at IoU >= 0.5.
    """
    pred_boxes = np.asarray(pred_boxes, dtype=np.float64).reshape(-1, 4)
    gt_boxes = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 4)
    matched = np.zeros(len(pred_boxes), dtype=bool)
    taken = np.zeros(len(gt_boxes), dtype=bool)
    order = np.argsort(-np.asarray(pred_scores, dtype=np.float64), kind="stable")
    for p in order:
        best_j, best_iou = -1, IOU_THRESHOLD
        for j in range(len(gt_boxes)):
            if taken[j] or gt_keys[j] != pred_keys[p]:
                continue
            overlap = iou(pred_boxes[p], gt_boxes[j])
            if overlap >= best_iou:
                best_j, best_iou = j, overlap
        if best_j >= 0:
            matched[p] = True
            taken[best_j] = True
    return matched
