from functools import cache

import pyproj

WGS84 = 4326
WEB_MERCATOR = 3857


@cache
def transformer(source_epsg: int, target_epsg: int) -> pyproj.Transformer:
    """Returns a cached (x, y)-ordered transformer between two EPSG codes"""
    return pyproj.Transformer.from_crs(
        f"EPSG:{source_epsg}", f"EPSG:{target_epsg}", always_xy=True
    )


def transform(xs, ys, source_epsg: int, target_epsg: int):
    """Transforms coordinates between EPSG codes. Identical codes are passed through untouched."""
    if source_epsg == target_epsg:
        return xs, ys
    return transformer(source_epsg, target_epsg).transform(xs, ys)


@cache
def is_geographic(epsg: int) -> bool:
    return pyproj.CRS.from_epsg(epsg).is_geographic


def utm_epsg_for(lon: float, lat: float) -> int:
    """
    Returns the EPSG code of the WGS84 UTM zone containing a point.

    Example: Ahmedabad (72.5, 23.0) is in zone 43 North, EPSG:32643
    """
    zone = int((lon + 180) // 6) + 1
    zone = min(max(zone, 1), 60)
    return (32600 if lat >= 0 else 32700) + zone


def metric_epsg_for(epsg: int, lon: float, lat: float) -> int:
    """
    Returns `epsg` when it is a usable metric CRS, otherwise the UTM zone at (lon, lat).

    Web mercator is projected but its scale grows with latitude, so it is treated like a
    geographic CRS here.
    """
    if epsg == WEB_MERCATOR or is_geographic(epsg):
        return utm_epsg_for(lon, lat)
    return epsg
