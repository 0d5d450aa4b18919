import math

from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

import numpy as np

from canopy_delta.exceptions import MetricError

IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
"""0.50, 0.55, ..., 0.95"""

RECALL_SAMPLES = np.linspace(0.0, 1.0, 101)

Interpolation = Literal["101", "all"]


@dataclass
class PRCurve:
    """Precision/recall points swept over descending score cutoffs"""

    threshold: float
    """IoU threshold the matches were made at"""

    ground_truth: int
    """Number of ground-truth instances"""

    recall: np.ndarray = field(default_factory=lambda: np.zeros(0))
    precision: np.ndarray = field(default_factory=lambda: np.zeros(0))
    scores: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self):
        return len(self.recall)

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.recall.tolist(), self.precision.tolist()))


def pr_curve(sweep: Iterable[tuple[float, bool]], ground_truth: int, threshold: float) -> PRCurve:
    """
    Builds a PR curve from (score, is true positive) outcomes.

    Outcomes are sorted by score descending (stable) before accumulating, so pooled outcomes from
    several images can be passed in any grouping.
    """
    outcomes = sorted(sweep, key=lambda o: -o[0])
    scores = np.array([s for s, _ in outcomes], dtype=np.float64)
    tp = np.cumsum([1 if hit else 0 for _, hit in outcomes], dtype=np.float64)
    fp = np.cumsum([0 if hit else 1 for _, hit in outcomes], dtype=np.float64)

    if len(outcomes) == 0:
        return PRCurve(threshold=threshold, ground_truth=ground_truth)

    precision = tp / (tp + fp)
    recall = tp / ground_truth if ground_truth > 0 else np.zeros_like(tp)
    return PRCurve(
        threshold=threshold,
        ground_truth=ground_truth,
        recall=recall,
        precision=precision,
        scores=scores,
    )


def _envelope(precision: np.ndarray) -> np.ndarray:
    return np.maximum.accumulate(precision[::-1])[::-1]


def average_precision(curve: PRCurve, interpolation: Interpolation = "101") -> float:
    """
    Area under the precision envelope of a PR curve.

    Args:
        curve: PR curve
        interpolation: `"101"` samples the envelope at recall 0.00, 0.01, ..., 1.00 and averages;
            `"all"` integrates the envelope over every recall step.

    Raises:
        MetricError: if the curve has no ground truth (AP is undefined)
    """
    if curve.ground_truth == 0:
        raise MetricError(f"AP is undefined without ground truth (IoU {curve.threshold})")
    if len(curve) == 0:
        return 0.0

    if interpolation == "101":
        envelope = _envelope(curve.precision)
        idx = np.searchsorted(curve.recall, RECALL_SAMPLES, side="left")
        sampled = np.where(idx < len(envelope), envelope[np.minimum(idx, len(envelope) - 1)], 0.0)
        return float(sampled.mean())

    if interpolation == "all":
        recall = np.concatenate(([0.0], curve.recall, [1.0]))
        precision = np.concatenate(([0.0], curve.precision, [0.0]))
        precision = _envelope(precision)
        steps = np.nonzero(recall[1:] != recall[:-1])[0]
        return float(np.sum((recall[steps + 1] - recall[steps]) * precision[steps + 1]))

    raise ValueError(f"Unknown interpolation: {interpolation}")


def mean_average_precision(aps: Sequence[float | None]) -> float:
    """
    Mean of the defined APs (None or NaN entries are skipped).

    Raises:
        MetricError: if no AP is defined
    """
    defined = [a for a in aps if a is not None and not math.isnan(a)]
    if not defined:
        raise MetricError("mAP is undefined: no class has a defined AP")
    return float(sum(defined) / len(defined))
