from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from canopy_delta.exceptions import ConfigurationError, ShapeMismatchError
from canopy_delta.metrics.iou import iou_box


@dataclass(frozen=True, slots=True)
class MatchCounts:
    """Match outcome at one IoU threshold and score cutoff"""

    true_positives: int = 0
    false_positives: int = 0
    false_negatives: int = 0

    def __post_init__(self):
        if min(self.true_positives, self.false_positives, self.false_negatives) < 0:
            raise ValueError("Match counts cannot be negative")

    def __add__(self, other: "MatchCounts") -> "MatchCounts":
        return MatchCounts(
            self.true_positives + other.true_positives,
            self.false_positives + other.false_positives,
            self.false_negatives + other.false_negatives,
        )

    @property
    def ground_truth(self) -> int:
        return self.true_positives + self.false_negatives

    @property
    def predictions(self) -> int:
        return self.true_positives + self.false_positives


class Ratio(NamedTuple):
    """A ratio whose 0/0 case is reported as 0 with `undefined` set"""

    value: float
    undefined: bool = False


def _ratio(numerator: int, denominator: int) -> Ratio:
    if denominator == 0:
        return Ratio(0.0, True)
    return Ratio(numerator / denominator, False)


def precision(counts: MatchCounts) -> Ratio:
    """TP / (TP + FP)"""
    return _ratio(counts.true_positives, counts.true_positives + counts.false_positives)


def recall(counts: MatchCounts) -> Ratio:
    """TP / (TP + FN)"""
    return _ratio(counts.true_positives, counts.true_positives + counts.false_negatives)


def f1_score(counts: MatchCounts) -> Ratio:
    return _ratio(
        2 * counts.true_positives,
        2 * counts.true_positives + counts.false_positives + counts.false_negatives,
    )


@dataclass
class MatchResult:
    """Greedy assignment of predictions to ground truth"""

    matches: list[int | None]
    """Matched ground-truth index for each prediction (input order), None when unmatched or below the cutoff"""

    order: list[int]
    """Prediction indices in processing order (score descending, stable)"""

    scores: list[float]
    counts: MatchCounts
    threshold: float

    @property
    def sweep(self) -> list[tuple[float, bool]]:
        """(score, is true positive) for each considered prediction, in processing order"""
        return [(self.scores[i], self.matches[i] is not None) for i in self.order]


def match_from_ious(
    scores: Sequence[float],
    ious: np.ndarray,
    threshold: float,
    score_cutoff: float = 0.0,
) -> MatchResult:
    """
    Greedy one-to-one matching from a precomputed IoU matrix of shape (predictions, ground truth).

    Predictions are taken in descending score order (ties keep input order). Each one claims the
    still unmatched ground truth with the highest IoU >= `threshold` (ties go to the lower index).
    Predictions scored below `score_cutoff` are ignored.
    """
    if not (0.0 < threshold <= 1.0):
        raise ConfigurationError(f"IoU threshold must be in (0, 1], got {threshold}")

    scores = [float(s) for s in scores]
    n_pred = len(scores)
    ious = np.asarray(ious, dtype=np.float64)
    if ious.ndim != 2 or ious.shape[0] != n_pred:
        raise ShapeMismatchError(f"IoU matrix shape {ious.shape} does not match {n_pred} predictions")
    n_gt = ious.shape[1]

    order = [i for i in sorted(range(n_pred), key=lambda i: -scores[i]) if scores[i] >= score_cutoff]
    matches: list[int | None] = [None] * n_pred
    claimed = np.zeros(n_gt, dtype=bool)

    for i in order:
        if n_gt == 0:
            break
        candidates = np.where(claimed, -1.0, ious[i])
        j = int(np.argmax(candidates))
        if candidates[j] >= threshold:
            matches[i] = j
            claimed[j] = True

    tp = int(claimed.sum())
    counts = MatchCounts(
        true_positives=tp,
        false_positives=len(order) - tp,
        false_negatives=n_gt - tp,
    )
    return MatchResult(matches=matches, order=order, scores=scores, counts=counts, threshold=threshold)


def match_instances(
    predictions: Sequence[tuple[float, object]],
    ground_truth: Sequence[object],
    iou_fn: Callable[[object, object], float] = iou_box,
    threshold: float = 0.5,
    score_cutoff: float = 0.0,
) -> MatchResult:
    """
    Matches scored predictions to ground truth instances.

    Args:
        predictions: (score, geometry) pairs
        ground_truth: Geometries
        iou_fn: IoU of a prediction geometry and a ground-truth geometry (e.g. `iou_box`, `iou_mask`)
        threshold: Minimum IoU for a match, in (0, 1]
        score_cutoff: Predictions scored below this are ignored

    Returns:
        MatchResult with the assignment and its MatchCounts
    """
    ious = np.zeros((len(predictions), len(ground_truth)), dtype=np.float64)
    for i, (_, p) in enumerate(predictions):
        for j, g in enumerate(ground_truth):
            ious[i, j] = iou_fn(p, g)
    return match_from_ious([s for s, _ in predictions], ious, threshold, score_cutoff)
