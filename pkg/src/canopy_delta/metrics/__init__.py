# ruff: noqa: F401,F403

from .iou import iou_box, iou_mask, box_iou_matrix, mask_iou_matrix
from .matching import (
    MatchCounts,
    MatchResult,
    Ratio,
    match_instances,
    match_from_ious,
    precision,
    recall,
    f1_score,
)
from .ap import (
    IOU_THRESHOLDS,
    PRCurve,
    pr_curve,
    average_precision,
    mean_average_precision,
)
from .evaluate import (
    EvalInstance,
    EvalReport,
    EvalSummary,
    evaluate,
    ground_truth_from_annotations,
    predictions_from_detections,
    parse_thresholds,
    tile_image_id,
    write_pr_curves,
)


def map_range(
    gt_by_image,
    pred_by_image,
    kind: str = "mask",
    thresholds=IOU_THRESHOLDS,
    interpolation: str = "101",
) -> float:
    """mAP averaged over the IoU thresholds 0.50, 0.55, ..., 0.95"""
    report = evaluate(gt_by_image, pred_by_image, thresholds=thresholds, interpolation=interpolation)
    return getattr(report.summary, kind).map_50_95
