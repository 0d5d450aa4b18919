import multiprocessing as mp

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

from canopy_delta.annotations.models import TILE_PIXELS, AnnotationDocument
from canopy_delta.annotations.rasterize import rasterize
from canopy_delta.config import settings
from canopy_delta.detections.models import Detection
from canopy_delta.exceptions import ConfigurationError, MetricError
from canopy_delta.geometry import bbox
from canopy_delta.log import LOGGER
from canopy_delta.metrics.ap import (
    IOU_THRESHOLDS,
    Interpolation,
    PRCurve,
    average_precision,
    mean_average_precision,
    pr_curve,
)
from canopy_delta.metrics.iou import box_iou_matrix, mask_iou_matrix
from canopy_delta.metrics.matching import MatchCounts, f1_score, match_from_ious, precision, recall
from canopy_delta.profile import profile

KINDS = ("box", "mask")

DEFAULT_SCORE_CUTOFF = 0.25

OPERATING_IOU = 0.5


@dataclass(slots=True)
class EvalInstance:
    """One ground-truth or predicted instance on one image"""

    label: str
    box: tuple[float, float, float, float]
    mask: np.ndarray
    score: float = 1.0


def tile_image_id(tile_id: str) -> str:
    """Image id of a tile: `"18/187421/113902"` -> `"18_187421_113902"`"""
    return tile_id.replace("/", "_")


def _polygon_box(vertices) -> tuple[float, float, float, float]:
    min_x, min_y, max_x, max_y = bbox(vertices)
    return (min_x, min_y, max_x - min_x, max_y - min_y)


def ground_truth_from_annotations(
    documents: dict[str, AnnotationDocument],
) -> dict[str, list[EvalInstance]]:
    """Ground truth keyed by image id. Boxes are polygon bounding boxes, masks are rasterized polygons."""
    return {
        image_id: [
            EvalInstance(
                label=a.label,
                box=_polygon_box(a.vertices),
                mask=rasterize(a.vertices, doc.image_width, doc.image_height),
            )
            for a in doc.annotations
        ]
        for image_id, doc in documents.items()
    }


def predictions_from_detections(
    detections: Sequence[Detection], tile_pixels: int = TILE_PIXELS
) -> dict[str, list[EvalInstance]]:
    """Predictions keyed by image id (see `tile_image_id`), in results-file order"""
    by_image: dict[str, list[EvalInstance]] = {}
    for d in detections:
        by_image.setdefault(tile_image_id(d.tile), []).append(
            EvalInstance(
                label=d.label,
                box=tuple(d.bbox),
                mask=rasterize(d.polygon, tile_pixels, tile_pixels),
                score=d.score,
            )
        )
    return by_image


def parse_thresholds(value: str) -> tuple[float, ...]:
    """
    Parses an IoU threshold argument: `"0.5:0.95"` (step 0.05), `"0.5"` or `"0.5,0.75"`.
    """
    try:
        if ":" in value:
            start, stop = (float(v) for v in value.split(":"))
            count = int(round((stop - start) / 0.05)) + 1
            thresholds = tuple(round(start + 0.05 * i, 2) for i in range(count))
        else:
            thresholds = tuple(float(v) for v in value.split(","))
    except ValueError:
        raise ConfigurationError(f"Invalid IoU thresholds: {value!r}")

    if not thresholds or any(not (0.0 < t <= 1.0) for t in thresholds):
        raise ConfigurationError(f"IoU thresholds must be in (0, 1], got {value!r}")
    return thresholds


@dataclass
class _ImageOutcome:
    sweeps: dict[tuple[str, str, float], list[tuple[float, bool]]] = field(default_factory=dict)
    ground_truth: dict[str, int] = field(default_factory=dict)
    operating: MatchCounts = field(default_factory=MatchCounts)


def _evaluate_image(args) -> _ImageOutcome:
    gts, preds, labels, thresholds, score_cutoff = args
    outcome = _ImageOutcome()

    for label in labels:
        g = [i for i in gts if i.label == label]
        p = [i for i in preds if i.label == label]
        outcome.ground_truth[label] = len(g)
        scores = [i.score for i in p]

        matrices = {
            "box": box_iou_matrix([i.box for i in p], [i.box for i in g]),
            "mask": mask_iou_matrix([i.mask for i in p], [i.mask for i in g]),
        }
        for kind, ious in matrices.items():
            for t in thresholds:
                outcome.sweeps[(kind, label, t)] = match_from_ious(scores, ious, t).sweep

        op = match_from_ious(scores, matrices["mask"], OPERATING_IOU, score_cutoff)
        outcome.operating = outcome.operating + op.counts

    return outcome


class MetricSet(BaseModel):
    """AP values of one geometry kind (box or mask)"""

    per_class: dict[str, dict[str, float | None]]
    """AP per class label and IoU threshold (None when the class has no ground truth)"""

    ap: dict[str, float]
    """mAP over classes at each IoU threshold"""

    map_50: float | None = None
    map_75: float | None = None
    map_50_95: float
    """Mean over every evaluated IoU threshold (0.50:0.05:0.95 by default)"""

    map_50_and_95: float | None = None
    """Mean of mAP@0.5 and mAP@0.95"""


class OperatingPoint(BaseModel):
    """Counts and rates at one score cutoff, mask IoU 0.5"""

    score_cutoff: float
    iou: float = OPERATING_IOU
    true_positives: int
    false_positives: int
    false_negatives: int
    precision: float
    precision_undefined: bool
    recall: float
    recall_undefined: bool
    f1: float

    detection_rate: float
    """TP / ground truth"""

    false_segmentation_rate: float
    """FP / predictions kept at the cutoff"""

    count_ratio: float | None
    """Predicted count / ground-truth count"""


class EvalSummary(BaseModel):
    model_config = ConfigDict(extra="forbid")

    images: int
    ground_truth: int
    predictions: int
    thresholds: list[float]
    interpolation: str
    box: MetricSet
    mask: MetricSet
    operating_point: OperatingPoint

    def write(self, path: Path | str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.model_dump_json(indent=2) + "\n")
        return path


@dataclass
class EvalReport:
    summary: EvalSummary
    curves: dict[tuple[str, str, float], PRCurve]
    """PR curves keyed by (kind, label, IoU threshold)"""


def _false_segmentation_rate(counts: MatchCounts) -> float:
    if counts.predictions == 0:
        return 0.0
    return counts.false_positives / counts.predictions


def _key(t: float) -> str:
    return f"{t:.2f}"


def _metric_set(curves, labels, thresholds, interpolation) -> MetricSet:
    per_class = {}
    for label in labels:
        per_class[label] = {}
        for t in thresholds:
            curve = curves[(label, t)]
            per_class[label][_key(t)] = (
                average_precision(curve, interpolation) if curve.ground_truth > 0 else None
            )

    ap = {}
    for t in thresholds:
        ap[_key(t)] = mean_average_precision([per_class[label][_key(t)] for label in labels])

    return MetricSet(
        per_class=per_class,
        ap=ap,
        map_50=ap.get(_key(0.5)),
        map_75=ap.get(_key(0.75)),
        map_50_95=mean_average_precision(list(ap.values())),
        map_50_and_95=(
            (ap[_key(0.5)] + ap[_key(0.95)]) / 2
            if _key(0.5) in ap and _key(0.95) in ap
            else None
        ),
    )


@profile
def evaluate(
    gt_by_image: dict[str, list[EvalInstance]],
    pred_by_image: dict[str, list[EvalInstance]],
    thresholds: Sequence[float] = IOU_THRESHOLDS,
    interpolation: Interpolation = "101",
    score_cutoff: float = DEFAULT_SCORE_CUTOFF,
    jobs: int = None,
) -> EvalReport:
    """
    Evaluates predictions against ground truth, pooled over images.

    Matching is done per image and per class; the (score, hit) outcomes of all images are then
    swept together into one PR curve per (kind, class, threshold). Images listed only in
    `pred_by_image` contribute false positives.

    Raises:
        MetricError: if there is no ground truth at all
    """
    thresholds = tuple(thresholds)
    image_ids = sorted(set(gt_by_image) | set(pred_by_image))
    labels = sorted(
        {i.label for v in gt_by_image.values() for i in v}
        | {i.label for v in pred_by_image.values() for i in v}
    )

    work = [
        (gt_by_image.get(i, []), pred_by_image.get(i, []), labels, thresholds, score_cutoff)
        for i in image_ids
    ]
    jobs = jobs or settings.jobs
    if jobs > 1 and len(work) > 1:
        with mp.Pool(jobs) as pool:
            outcomes = pool.map(_evaluate_image, work)
    else:
        outcomes = [_evaluate_image(w) for w in work]

    gt_counts = {label: sum(o.ground_truth.get(label, 0) for o in outcomes) for label in labels}
    if sum(gt_counts.values()) == 0:
        raise MetricError("Cannot evaluate without ground truth instances")

    curves = {}
    for kind in KINDS:
        for label in labels:
            for t in thresholds:
                pooled = [s for o in outcomes for s in o.sweeps.get((kind, label, t), [])]
                curves[(kind, label, t)] = pr_curve(pooled, gt_counts[label], t)

    sets = {
        kind: _metric_set(
            {(label, t): curves[(kind, label, t)] for label in labels for t in thresholds},
            labels,
            thresholds,
            interpolation,
        )
        for kind in KINDS
    }

    counts = sum((o.operating for o in outcomes), MatchCounts())
    n_gt = sum(gt_counts.values())
    p, r = precision(counts), recall(counts)
    operating_point = OperatingPoint(
        score_cutoff=score_cutoff,
        true_positives=counts.true_positives,
        false_positives=counts.false_positives,
        false_negatives=counts.false_negatives,
        precision=p.value,
        precision_undefined=p.undefined,
        recall=r.value,
        recall_undefined=r.undefined,
        f1=f1_score(counts).value,
        detection_rate=counts.true_positives / n_gt,
        false_segmentation_rate=_false_segmentation_rate(counts),
        count_ratio=counts.predictions / n_gt,
    )

    summary = EvalSummary(
        images=len(image_ids),
        ground_truth=n_gt,
        predictions=sum(len(v) for v in pred_by_image.values()),
        thresholds=list(thresholds),
        interpolation=interpolation,
        box=sets["box"],
        mask=sets["mask"],
        operating_point=operating_point,
    )
    LOGGER.info(
        f"evaluated {summary.images} images: mask mAP@0.5:0.95 = {summary.mask.map_50_95:.4f}, "
        f"box mAP@0.5:0.95 = {summary.box.map_50_95:.4f}"
    )
    return EvalReport(summary=summary, curves=curves)


def pr_curves_frame(curves: dict[tuple[str, str, float], PRCurve]) -> pd.DataFrame:
    rows = []
    for (kind, label, t), curve in sorted(curves.items()):
        for rec, prec, score in zip(curve.recall, curve.precision, curve.scores):
            rows.append(
                {
                    "iou": t,
                    "kind": kind,
                    "label": label,
                    "recall": float(rec),
                    "precision": float(prec),
                    "score": float(score),
                }
            )
    return pd.DataFrame(rows, columns=["iou", "kind", "label", "recall", "precision", "score"])


def write_pr_curves(curves: dict[tuple[str, str, float], PRCurve], path: Path | str) -> Path:
    """Writes every PR curve point as CSV (columns iou, kind, label, recall, precision, score)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pr_curves_frame(curves).to_csv(path, index=False)
    return path
