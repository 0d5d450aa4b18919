import math

import numpy as np
from PIL import Image

from canopy_delta.annotations.models import TILE_PIXELS, InstanceMask, PolygonAnnotation
from canopy_delta.exceptions import DegeneratePolygonError
from canopy_delta.geometry import Vertices, open_ring


def rasterize(vertices: Vertices, width: int, height: int) -> np.ndarray:
    """
    Scanline even-odd fill of a polygon on a pixel grid.

    A pixel is set iff its center `(col + 0.5, row + 0.5)` lies inside the polygon. Ties follow the
    top-left rule: centers exactly on a left or top edge are inside, on a right or bottom edge
    outside. Only the rows and columns spanned by the polygon's bounding box are scanned.

    Returns:
        Boolean grid with shape (height, width)
    """
    grid = np.zeros((height, width), dtype=bool)
    points = open_ring(vertices)
    if len(points) < 3:
        return grid

    xs = np.array([p[0] for p in points], dtype=np.float64)
    ys = np.array([p[1] for p in points], dtype=np.float64)

    # edge table: edge i runs from vertex i to vertex i - 1
    x_i, y_i = xs, ys
    x_j, y_j = np.roll(xs, 1), np.roll(ys, 1)
    sloped = y_i != y_j
    x_i, y_i, x_j, y_j = x_i[sloped], y_i[sloped], x_j[sloped], y_j[sloped]
    if x_i.size == 0:
        return grid

    row_start = max(0, math.floor(ys.min() - 0.5))
    row_stop = min(height, math.ceil(ys.max() - 0.5) + 1)
    col_start = max(0, math.floor(xs.min() - 0.5))
    col_stop = min(width, math.ceil(xs.max() - 0.5) + 1)
    if row_start >= row_stop or col_start >= col_stop:
        return grid

    centers_x = np.arange(col_start, col_stop, dtype=np.float64) + 0.5

    for row in range(row_start, row_stop):
        y = row + 0.5
        active = (y_i > y) != (y_j > y)
        if not active.any():
            continue
        xi, yi, xj, yj = x_i[active], y_i[active], x_j[active], y_j[active]
        crossings = (xj - xi) * (y - yi) / (yj - yi) + xi
        counts = np.count_nonzero(centers_x[:, None] < crossings[None, :], axis=1)
        grid[row, col_start:col_stop] = counts % 2 == 1

    return grid


def polygon_to_mask(
    annotation: PolygonAnnotation | Vertices,
    width: int = TILE_PIXELS,
    height: int = TILE_PIXELS,
    image_id: str = None,
) -> InstanceMask:
    """
    Rasterizes a polygon annotation into an instance mask (see `rasterize` for the pixel rule).

    Raises:
        DegeneratePolygonError: if no pixel center falls inside the polygon
    """
    if isinstance(annotation, PolygonAnnotation):
        vertices = annotation.vertices
        image_id = image_id or annotation.image_id
    else:
        vertices = annotation

    grid = rasterize(vertices, width, height)
    if not grid.any():
        raise DegeneratePolygonError(
            f"Polygon covers no pixel centers after rasterization (image {image_id})"
        )
    return InstanceMask(grid=grid, image_id=image_id)


def export_mask_png(mask: InstanceMask | np.ndarray, path) -> None:
    """Writes a mask as a 1-bit PNG"""
    grid = mask.grid if isinstance(mask, InstanceMask) else np.asarray(mask, dtype=bool)
    Image.fromarray(grid).save(path, format="PNG")
