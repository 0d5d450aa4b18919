import math

import numpy as np

from shapely import STRtree
from shapely.geometry import Polygon, box
from shapely.ops import unary_union

from canopy_delta.annotations.rasterize import rasterize
from canopy_delta.detections.models import TreeInstance
from canopy_delta.exceptions import CRSMismatchError, MixedEpochError
from canopy_delta.geometry import bbox, centroid, open_ring, shoelace_area
from canopy_delta.log import LOGGER
from canopy_delta.profile import profile
from canopy_delta.raster import crs
from canopy_delta.raster.tiles import ORIGIN_SHIFT, TILE_SIZE, TileIndex

DEFAULT_DEDUPE_IOU = 0.5

GRID_RESOLUTION_M = 0.1

CANDIDATE_MARGIN_M = 1.0

SEAM_GAP_M = 0.01


def _rasterize_pair(a, b, resolution: float):
    min_x = min(a[0], b[0])
    min_y = min(a[1], b[1])
    max_x = max(a[2], b[2])
    max_y = max(a[3], b[3])
    width = max(1, math.ceil((max_x - min_x) / resolution))
    height = max(1, math.ceil((max_y - min_y) / resolution))

    def to_grid(vertices):
        return [((x - min_x) / resolution, (max_y - y) / resolution) for x, y in vertices]

    return to_grid, width, height


def geo_iou(a: TreeInstance, b: TreeInstance, resolution: float = GRID_RESOLUTION_M) -> float:
    """
    IoU of two instances' projected polygons, counted on a `resolution` meter grid covering the
    pair's joint bounding box.
    """
    if a.epsg != b.epsg:
        raise CRSMismatchError(f"Instances are in different CRSs: EPSG:{a.epsg} vs EPSG:{b.epsg}")

    box_a, box_b = a.projected_bounds, b.projected_bounds
    if box_a[2] < box_b[0] or box_b[2] < box_a[0] or box_a[3] < box_b[1] or box_b[3] < box_a[1]:
        return 0.0

    to_grid, width, height = _rasterize_pair(box_a, box_b, resolution)
    mask_a = rasterize(to_grid(a.projected_polygon), width, height)
    mask_b = rasterize(to_grid(b.projected_polygon), width, height)
    union = (mask_a | mask_b).sum()
    if union == 0:
        return 0.0
    return float((mask_a & mask_b).sum() / union)


def union_area(polygons, resolution: float = GRID_RESOLUTION_M) -> float:
    """Area of the union of projected polygons, counted on a `resolution` meter grid"""
    boxes = [bbox(p) for p in polygons]
    joint = (
        min(b[0] for b in boxes),
        min(b[1] for b in boxes),
        max(b[2] for b in boxes),
        max(b[3] for b in boxes),
    )
    to_grid, width, height = _rasterize_pair(joint, joint, resolution)
    covered = rasterize(to_grid(polygons[0]), width, height)
    for p in polygons[1:]:
        covered |= rasterize(to_grid(p), width, height)
    return float(covered.sum() * resolution * resolution)


def _mercator(instance: TreeInstance) -> tuple[np.ndarray, np.ndarray]:
    lons, lats = zip(*instance.polygon)
    xs, ys = crs.transform(list(lons), list(lats), crs.WGS84, crs.WEB_MERCATOR)
    return np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.float64)


def _chords(along: np.ndarray, across: np.ndarray, origin: float, sign: float, span: float, tol: float):
    """Maps each grid line index touched by the outline to the (min, max) extent of its vertices on that line"""
    k = np.round((along - origin) * sign / span)
    on_line = np.abs(origin + sign * k * span - along) <= tol
    chords = {}
    for line in np.unique(k[on_line]):
        values = across[on_line & (k == line)]
        if values.size >= 2 and values.max() > values.min():
            chords[int(line)] = (float(values.min()), float(values.max()))
    return chords


def seam_overlap(a: TreeInstance, b: TreeInstance) -> float:
    """
    How well two outlines from different tiles continue each other across a tile seam.

    Clipping at a tile edge leaves each fragment with a chord on the shared tile-grid line. The
    result is the overlap of the two chords divided by the shorter one (0 when the instances come
    from the same tile or share no grid line).
    """
    if a.tile is None or b.tile is None or a.tile == b.tile:
        return 0.0
    zoom = TileIndex.parse(a.tile).zoom
    if TileIndex.parse(b.tile).zoom != zoom:
        return 0.0

    span = 2 * ORIGIN_SHIFT / 2**zoom
    tol = span / TILE_SIZE / 2
    xa, ya = _mercator(a)
    xb, yb = _mercator(b)

    best = 0.0
    # vertical seams (x grows east from -ORIGIN_SHIFT), then horizontal seams (y shrinks south from ORIGIN_SHIFT)
    for along_a, across_a, along_b, across_b, origin, sign in (
        (xa, ya, xb, yb, -ORIGIN_SHIFT, 1.0),
        (ya, xa, yb, xb, ORIGIN_SHIFT, -1.0),
    ):
        chords_a = _chords(along_a, across_a, origin, sign, span, tol)
        chords_b = _chords(along_b, across_b, origin, sign, span, tol)
        for line in chords_a.keys() & chords_b.keys():
            lo_a, hi_a = chords_a[line]
            lo_b, hi_b = chords_b[line]
            overlap = min(hi_a, hi_b) - max(lo_a, lo_b)
            if overlap > 0:
                best = max(best, overlap / min(hi_a - lo_a, hi_b - lo_b))
    return min(best, 1.0)


def _sort_key(instance: TreeInstance):
    min_lon, min_lat, _, _ = instance.geographic_bounds
    return (min_lon, min_lat, -instance.score, instance.id)


def merge_instances(a: TreeInstance, b: TreeInstance) -> TreeInstance:
    """
    Merges two instances into one with the higher score member's identity and the union outline.

    Gaps narrower than `2 * SEAM_GAP_M` between the outlines (left by reprojecting both sides of a
    tile seam) are closed. If the union still has several parts the largest one is kept.
    """
    keep = b if b.score > a.score else a

    grown = [Polygon(i.projected_polygon).buffer(SEAM_GAP_M, join_style="mitre") for i in (a, b)]
    merged = unary_union(grown).buffer(-SEAM_GAP_M, join_style="mitre")
    if merged.is_empty:
        merged = Polygon(keep.projected_polygon)
    elif merged.geom_type != "Polygon":
        merged = max(merged.geoms, key=lambda part: part.area)
    projected = open_ring(merged.exterior.coords)

    xs, ys = zip(*projected)
    lons, lats = crs.transform(list(xs), list(ys), keep.epsg, crs.WGS84)
    cx, cy = centroid(projected)
    clon, clat = crs.transform(cx, cy, keep.epsg, crs.WGS84)

    return keep.model_copy(
        update={
            "polygon": list(zip(map(float, lons), map(float, lats))),
            "centroid": (float(clon), float(clat)),
            "projected_polygon": projected,
            "projected_centroid": (cx, cy),
            "area_m2": shoelace_area(projected),
            "score": max(a.score, b.score),
        }
    )


def _dedupe_pass(instances: list[TreeInstance], dedupe_iou: float, resolution: float):
    tree = STRtree([Polygon(i.projected_polygon) for i in instances])
    m = CANDIDATE_MARGIN_M
    clusters = []
    owner = {}
    merges = 0

    for i, instance in enumerate(instances):
        min_x, min_y, max_x, max_y = instance.projected_bounds
        nearby = tree.query(box(min_x - m, min_y - m, max_x + m, max_y + m))
        for c in sorted({owner[j] for j in nearby if j < i}):
            if (
                geo_iou(clusters[c], instance, resolution) >= dedupe_iou
                or seam_overlap(clusters[c], instance) >= dedupe_iou
            ):
                clusters[c] = merge_instances(clusters[c], instance)
                owner[i] = c
                merges += 1
                break
        else:
            owner[i] = len(clusters)
            clusters.append(instance)

    return sorted(clusters, key=_sort_key), merges


@profile
def assemble_scene(
    instances: list[TreeInstance],
    dedupe_iou: float = DEFAULT_DEDUPE_IOU,
    resolution: float = GRID_RESOLUTION_M,
) -> list[TreeInstance]:
    """
    Merges instances detected more than once (on neighbouring tiles) into single trees.

    Instances are visited in a fixed spatial order (min lon, min lat, score descending). Each one
    is merged into the first earlier cluster it overlaps with geo IoU >= `dedupe_iou`, or that it
    continues across a tile seam (`seam_overlap` >= `dedupe_iou`). A merge keeps the higher score
    member's id and score and the union outline. Passes repeat until nothing merges, so
    assembling an assembled scene returns it unchanged.

    Raises:
        MixedEpochError: if the instances come from more than one epoch
        CRSMismatchError: if the instances are projected to different CRSs
    """
    if not instances:
        return []

    epochs = sorted({i.epoch for i in instances})
    if len(epochs) > 1:
        raise MixedEpochError(f"Cannot assemble instances from several epochs: {epochs}")

    codes = sorted({i.epsg for i in instances})
    if len(codes) > 1:
        raise CRSMismatchError(f"Instances are projected to several CRSs: {codes}")

    current = sorted(instances, key=_sort_key)
    while True:
        current, merges = _dedupe_pass(current, dedupe_iou, resolution)
        LOGGER.debug(f"dedupe pass merged {merges} instances, {len(current)} remain")
        if merges == 0:
            return current
