from typing import Sequence

import numpy as np
from shapely.geometry import LinearRing, Polygon

Vertices = Sequence[tuple[float, float]]


def open_ring(vertices: Vertices) -> list[tuple[float, float]]:
    """Returns the vertices without a repeated closing vertex"""
    points = [(float(x), float(y)) for x, y in vertices]
    if len(points) > 1 and points[0] == points[-1]:
        points = points[:-1]
    return points


def dedupe_vertices(vertices: Vertices) -> list[tuple[float, float]]:
    """Removes consecutive duplicate vertices (including the closing duplicate)"""
    points = []
    for point in open_ring(vertices):
        if not points or point != points[-1]:
            points.append(point)
    while len(points) > 1 and points[0] == points[-1]:
        points.pop()
    return points


def is_simple(vertices: Vertices) -> bool:
    """True if the closed ring through the vertices does not touch or cross itself"""
    points = open_ring(vertices)
    if len(points) < 3:
        return False
    return LinearRing(points).is_simple


def shoelace_area(vertices: Vertices) -> float:
    """Unsigned planar area of a polygon ring"""
    points = np.asarray(open_ring(vertices), dtype=np.float64)
    if len(points) < 3:
        return 0.0
    x, y = points[:, 0], points[:, 1]
    return float(abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))) / 2)


def centroid(vertices: Vertices) -> tuple[float, float]:
    """Area centroid of a polygon ring (vertex mean for zero-area rings)"""
    points = open_ring(vertices)
    c = Polygon(points).centroid
    if c.is_empty:
        xs, ys = zip(*points)
        return float(np.mean(xs)), float(np.mean(ys))
    return float(c.x), float(c.y)


def points_in_polygon(vertices: Vertices, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """
    Even-odd containment test for many points.

    An edge counts as crossed when the point's y lies in the half-open span [min_y, max_y) of the
    edge and the edge crosses strictly to the right of the point. Points on left and top edges are
    therefore inside, points on right and bottom edges are outside.
    """
    points = open_ring(vertices)
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    inside = np.zeros(np.broadcast(xs, ys).shape, dtype=bool)

    n = len(points)
    for i in range(n):
        xi, yi = points[i]
        xj, yj = points[i - 1]
        if yi == yj:
            continue
        spans = (yi > ys) != (yj > ys)
        x_cross = (xj - xi) * (ys - yi) / (yj - yi) + xi
        inside ^= spans & (xs < x_cross)

    return inside


def bbox(vertices: Vertices) -> tuple[float, float, float, float]:
    """Returns (min_x, min_y, max_x, max_y)"""
    points = np.asarray(open_ring(vertices), dtype=np.float64)
    return (
        float(points[:, 0].min()),
        float(points[:, 1].min()),
        float(points[:, 0].max()),
        float(points[:, 1].max()),
    )
