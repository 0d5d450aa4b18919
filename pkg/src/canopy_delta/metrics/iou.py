from typing import Sequence

import numpy as np

from canopy_delta.annotations.models import InstanceMask
from canopy_delta.exceptions import MetricError

Box = tuple[float, float, float, float]
"""Axis-aligned box as (x, y, width, height)"""


def _check_box(box: Box) -> None:
    if not (box[2] > 0 and box[3] > 0):
        raise MetricError(f"Degenerate box {tuple(box)}: width and height must be greater than 0")


def iou_box(a: Box, b: Box) -> float:
    """Intersection over union of two (x, y, w, h) boxes"""
    _check_box(a)
    _check_box(b)
    ix = max(0.0, min(a[0] + a[2], b[0] + b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[1] + a[3], b[1] + b[3]) - max(a[1], b[1]))
    intersection = ix * iy
    union = a[2] * a[3] + b[2] * b[3] - intersection
    return float(intersection) / float(union)


def _grid(mask) -> np.ndarray:
    return mask.grid if isinstance(mask, InstanceMask) else np.asarray(mask, dtype=bool)


def iou_mask(a: InstanceMask | np.ndarray, b: InstanceMask | np.ndarray) -> float:
    """
    Intersection over union of two masks, counted in pixels.

    Raises:
        MetricError: if the grids differ in shape or both masks are empty
    """
    a, b = _grid(a), _grid(b)
    if a.shape != b.shape:
        raise MetricError(f"Mask dimensions differ: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        raise MetricError("IoU of two empty masks is undefined")
    return float(np.count_nonzero(a & b)) / float(union)


def box_iou_matrix(predictions: Sequence[Box], ground_truth: Sequence[Box]) -> np.ndarray:
    """Pairwise box IoU, shape (predictions, ground truth)"""
    out = np.zeros((len(predictions), len(ground_truth)), dtype=np.float64)
    for i, p in enumerate(predictions):
        for j, g in enumerate(ground_truth):
            out[i, j] = iou_box(p, g)
    return out


def mask_iou_matrix(predictions: Sequence, ground_truth: Sequence) -> np.ndarray:
    """
    Pairwise mask IoU, shape (predictions, ground truth).

    Pairs whose union is empty get 0.
    """
    if len(predictions) == 0 or len(ground_truth) == 0:
        return np.zeros((len(predictions), len(ground_truth)), dtype=np.float64)

    p = np.stack([_grid(m).ravel() for m in predictions])
    g = np.stack([_grid(m).ravel() for m in ground_truth])
    if p.shape[1] != g.shape[1]:
        raise MetricError(f"Mask dimensions differ: {p.shape[1]} vs {g.shape[1]} pixels")

    # only pixels covered by some mask contribute
    active = p.any(axis=0) | g.any(axis=0)
    p = p[:, active].astype(np.float64)
    g = g[:, active].astype(np.float64)

    intersection = p @ g.T
    union = p.sum(axis=1)[:, None] + g.sum(axis=1)[None, :] - intersection
    out = np.zeros_like(intersection)
    np.divide(intersection, union, out=out, where=union > 0)
    return out
