# ruff: noqa: F401,F403

from .geotransform import GeoTransform
from .crs import utm_epsg_for, metric_epsg_for
from .scene import SceneDescriptor, read_scene, write_scene, read_descriptor
from .stretch import stretch_to_8bit, apply_stretch, percentile_limits
from .tiles import (
    TILE_SIZE,
    MAX_LATITUDE,
    TileIndex,
    lonlat_to_tile,
    tile_bounds,
    tile_geotransform,
    tile_range,
)
from .tiler import (
    RasterTile,
    TileRecord,
    TileManifest,
    plan_tiles,
    render_tile,
    scene_footprint,
    tile_scene,
    read_tile_samples,
)


def pixel_to_geo(transform: GeoTransform, col, row):
    """Converts pixel coordinates to CRS coordinates (see `GeoTransform.pixel_to_geo`)"""
    return transform.pixel_to_geo(col, row)


def geo_to_pixel(transform: GeoTransform, x, y):
    """Converts CRS coordinates to pixel coordinates (see `GeoTransform.geo_to_pixel`)"""
    return transform.geo_to_pixel(x, y)
