"""
Web-mercator XYZ tile math.

Tiles are addressed the usual slippy-map way: zoom `z` splits the world into `2^z x 2^z` tiles,
`x` grows eastward from -180 degrees and `y` grows southward from the northern latitude bound.
"""

import math

from dataclasses import dataclass

from canopy_delta.exceptions import DomainError
from canopy_delta.raster.crs import WEB_MERCATOR
from canopy_delta.raster.geotransform import GeoTransform

TILE_SIZE = 512
"""Pixels per tile edge"""

MAX_LATITUDE = 85.05112878
"""Latitude bound of the web-mercator square, in degrees"""

ORIGIN_SHIFT = math.pi * 6378137
"""Half the width of the web-mercator square, in meters (20037508.342789244)"""


@dataclass(frozen=True, order=True, slots=True)
class TileIndex:
    """Address of one tile. Instances sort by (zoom, x, y)."""

    zoom: int
    x: int
    y: int

    def __post_init__(self):
        if self.zoom < 0:
            raise DomainError(f"Tile zoom must be >= 0, got {self.zoom}")
        n = 2**self.zoom
        if not (0 <= self.x < n and 0 <= self.y < n):
            raise DomainError(
                f"Tile ({self.x}, {self.y}) is outside the {n}x{n} grid of zoom {self.zoom}"
            )

    def __str__(self):
        return f"{self.zoom}/{self.x}/{self.y}"

    @classmethod
    def parse(cls, value: str) -> "TileIndex":
        """Parses a `"z/x/y"` tile identifier"""
        try:
            zoom, x, y = [int(part) for part in value.strip().split("/")]
        except ValueError:
            raise DomainError(f"Invalid tile identifier '{value}' (expected 'z/x/y')")
        return cls(zoom, x, y)


def _lon_edge(x: int, n: int) -> float:
    return x / n * 360.0 - 180.0


def _lat_edge(y: int, n: int) -> float:
    return math.degrees(math.atan(math.sinh(math.pi * (1 - 2 * y / n))))


def lonlat_to_tile(lon: float, lat: float, zoom: int) -> TileIndex:
    """
    Returns the tile containing a point.

    Args:
        lon: Longitude in degrees, -180 <= lon < 180
        lat: Latitude in degrees, within +/- 85.05112878
        zoom: Zoom level

    Returns:
        TileIndex of the tile that contains the point

    Raises:
        DomainError: if the point is outside the web-mercator square
    """
    if not (-180.0 <= lon < 180.0):
        raise DomainError(f"Longitude {lon} is outside [-180, 180)")
    if not abs(lat) <= MAX_LATITUDE:
        raise DomainError(
            f"Latitude {lat} is outside the web-mercator bound of +/-{MAX_LATITUDE} degrees"
        )
    if zoom < 0:
        raise DomainError(f"Zoom must be >= 0, got {zoom}")

    n = 2**zoom
    phi = math.radians(lat)
    x = math.floor((lon + 180.0) / 360.0 * n)
    y = math.floor((1 - math.log(math.tan(phi) + 1 / math.cos(phi)) / math.pi) / 2 * n)

    # the bound itself rounds a hair past the grid edge
    x = min(max(x, 0), n - 1)
    y = min(max(y, 0), n - 1)

    return TileIndex(zoom, x, y)


def tile_bounds(tile: TileIndex) -> tuple[float, float, float, float]:
    """
    Returns the geographic bounding box of a tile as (west, south, east, north) in degrees.

    Adjacent tiles share edges exactly because every edge is computed from its own index.
    """
    n = 2**tile.zoom
    return (
        _lon_edge(tile.x, n),
        _lat_edge(tile.y + 1, n),
        _lon_edge(tile.x + 1, n),
        _lat_edge(tile.y, n),
    )


def tile_geotransform(tile: TileIndex, tile_size: int = TILE_SIZE) -> GeoTransform:
    """Returns the geotransform of a tile's pixel grid in web-mercator meters (EPSG:3857)"""
    n = 2**tile.zoom
    span = 2 * ORIGIN_SHIFT / n
    resolution = span / tile_size
    return GeoTransform(
        origin_x=-ORIGIN_SHIFT + tile.x * span,
        pixel_width=resolution,
        row_rotation=0.0,
        origin_y=ORIGIN_SHIFT - tile.y * span,
        col_rotation=0.0,
        pixel_height=-resolution,
        epsg=WEB_MERCATOR,
    )


def tile_range(
    west: float, south: float, east: float, north: float, zoom: int
) -> list[TileIndex]:
    """Returns every tile in the corner range of a lon/lat box, sorted by (zoom, x, y)"""
    east = min(east, math.nextafter(180.0, 0.0))
    top_left = lonlat_to_tile(west, north, zoom)
    bottom_right = lonlat_to_tile(east, south, zoom)
    return [
        TileIndex(zoom, x, y)
        for x in range(top_left.x, bottom_right.x + 1)
        for y in range(top_left.y, bottom_right.y + 1)
    ]
