from typing import Literal

import numpy as np
from scipy.optimize import linear_sum_assignment

from canopy_delta.change.models import VERDICTS, ChangeRecord, ChangeSummary
from canopy_delta.detections.assemble import geo_iou
from canopy_delta.detections.models import TreeInstance
from canopy_delta.exceptions import ConfigurationError, CRSMismatchError
from canopy_delta.log import LOGGER
from canopy_delta.profile import profile

DEFAULT_MAX_DIST = 2.5
"""Meters; 5 pixels at 0.5 m GSD"""

DEFAULT_MIN_IOU = 0.1

Strategy = Literal["greedy", "optimal"]
Criterion = Literal["distance", "iou"]


def _check_crs(earlier: list[TreeInstance], later: list[TreeInstance]) -> None:
    codes = sorted({i.epsg for i in earlier} | {i.epsg for i in later})
    if len(codes) > 1:
        raise CRSMismatchError(
            f"Epochs must be georeferenced in one CRS, found {', '.join(f'EPSG:{c}' for c in codes)}"
        )


def centroid_distances(earlier: list[TreeInstance], later: list[TreeInstance]) -> np.ndarray:
    """Projected centroid distances in meters, shape (earlier, later)"""
    a = np.array([i.projected_centroid for i in earlier], dtype=np.float64).reshape(-1, 2)
    b = np.array([i.projected_centroid for i in later], dtype=np.float64).reshape(-1, 2)
    return np.hypot(a[:, None, 0] - b[None, :, 0], a[:, None, 1] - b[None, :, 1])


def _iou_matrix(earlier, later) -> np.ndarray:
    ious = np.zeros((len(earlier), len(later)), dtype=np.float64)
    for i, a in enumerate(earlier):
        for j, b in enumerate(later):
            ious[i, j] = geo_iou(a, b)
    return ious


def greedy_assignment(costs: np.ndarray, allowed: np.ndarray, earlier_ids, later_ids) -> list[tuple[int, int]]:
    """Claims allowed pairs one-to-one in ascending cost, ties by (earlier id, later id)"""
    rows, cols = np.nonzero(allowed)
    candidates = sorted(
        zip(rows.tolist(), cols.tolist()),
        key=lambda rc: (costs[rc], earlier_ids[rc[0]], later_ids[rc[1]]),
    )
    used_rows, used_cols, pairs = set(), set(), []
    for r, c in candidates:
        if r in used_rows or c in used_cols:
            continue
        used_rows.add(r)
        used_cols.add(c)
        pairs.append((r, c))
    return pairs


def optimal_assignment(costs: np.ndarray, allowed: np.ndarray) -> list[tuple[int, int]]:
    """
    One-to-one assignment over the allowed pairs that matches as many pairs as possible and, among
    those, has the least total cost.

    Solved as a square assignment problem: every item may instead take its own dummy partner at a
    penalty larger than any achievable total cost, so an extra match always beats a cheaper set.
    """
    n, m = allowed.shape
    if n == 0 or m == 0 or not allowed.any():
        return []

    penalty = (min(n, m) + 1) * float(costs[allowed].max() + 1.0)
    size = n + m
    matrix = np.full((size, size), np.inf)
    matrix[:n, :m] = np.where(allowed, costs, np.inf)
    matrix[:n, m:][np.arange(n), np.arange(n)] = penalty
    matrix[n:, :m][np.arange(m), np.arange(m)] = penalty
    matrix[n:, m:] = 0.0

    rows, cols = linear_sum_assignment(matrix)
    return sorted((int(r), int(c)) for r, c in zip(rows, cols) if r < n and c < m)


@profile
def match_epochs(
    earlier: list[TreeInstance],
    later: list[TreeInstance],
    max_dist: float = DEFAULT_MAX_DIST,
    strategy: Strategy = "greedy",
    criterion: Criterion = "distance",
    min_iou: float = DEFAULT_MIN_IOU,
) -> list[ChangeRecord]:
    """
    Pairs the trees of two epochs and classifies each one as persisted, gained or lost.

    With `criterion="distance"` a pair is a candidate when its projected centroids are at most
    `max_dist` meters apart and its cost is that distance. With `criterion="iou"` a pair is a
    candidate when the outlines overlap with IoU >= `min_iou` and its cost is 1 - IoU.

    Strategies:
        greedy: candidates claimed in ascending cost, ties by (earlier id, later id)
        optimal: most matches possible, then least total cost

    Returns:
        Records ordered persisted, lost, gained; each group by instance id

    Raises:
        CRSMismatchError: if the instances are not all in one projected CRS
    """
    if max_dist <= 0:
        raise ConfigurationError(f"max_dist must be greater than 0, got {max_dist}")
    if strategy not in ("greedy", "optimal"):
        raise ConfigurationError(f"Unknown matching strategy: {strategy}")
    if criterion not in ("distance", "iou"):
        raise ConfigurationError(f"Unknown matching criterion: {criterion}")

    _check_crs(earlier, later)
    earlier = sorted(earlier, key=lambda i: i.id)
    later = sorted(later, key=lambda i: i.id)

    distances = centroid_distances(earlier, later)
    ious = None
    if criterion == "distance":
        allowed = distances <= max_dist
        costs = distances
    else:
        ious = _iou_matrix(earlier, later)
        allowed = ious >= min_iou
        costs = 1.0 - ious

    if strategy == "greedy":
        pairs = greedy_assignment(costs, allowed, [i.id for i in earlier], [i.id for i in later])
    else:
        pairs = optimal_assignment(costs, allowed)

    matched_earlier = {r for r, _ in pairs}
    matched_later = {c for _, c in pairs}

    records = [
        ChangeRecord(
            verdict="persisted",
            earlier=earlier[r],
            later=later[c],
            distance_m=float(distances[r, c]),
            iou=None if ious is None else float(ious[r, c]),
        )
        for r, c in sorted(pairs)
    ]
    records += [
        ChangeRecord(verdict="lost", earlier=e)
        for i, e in enumerate(earlier)
        if i not in matched_earlier
    ]
    records += [
        ChangeRecord(verdict="gained", later=g)
        for j, g in enumerate(later)
        if j not in matched_later
    ]

    LOGGER.info(
        f"{strategy} {criterion} matching: {len(pairs)} persisted, "
        f"{len(earlier) - len(pairs)} lost, {len(later) - len(pairs)} gained"
    )
    return records


def summarize(
    records: list[ChangeRecord],
    strategy: str = "greedy",
    criterion: str = "distance",
    max_dist: float = DEFAULT_MAX_DIST,
) -> ChangeSummary:
    counts = {v: sum(1 for r in records if r.verdict == v) for v in VERDICTS}
    return ChangeSummary(
        earlier_count=counts["persisted"] + counts["lost"],
        later_count=counts["persisted"] + counts["gained"],
        strategy=strategy,
        criterion=criterion,
        max_dist=max_dist,
        **counts,
    )
