import math

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from canopy_delta.exceptions import ConfigurationError


@dataclass(frozen=True, slots=True)
class GeoTransform:
    """
    Affine mapping between pixel indices and coordinates of a coordinate reference system.

    Coefficients follow the six-number GDAL ordering:

    ```
    x = origin_x + col * pixel_width + row * row_rotation
    y = origin_y + col * col_rotation + row * pixel_height
    ```

    North-up rasters have `pixel_height < 0` and both rotations at zero. Pixel `(col, row)` covers
    the half-open square `[col, col + 1) x [row, row + 1)` in pixel space, so its center is at
    `(col + 0.5, row + 0.5)`.
    """

    origin_x: float
    pixel_width: float
    row_rotation: float
    origin_y: float
    col_rotation: float
    pixel_height: float
    epsg: int
    """EPSG code of the coordinate reference system"""

    def __post_init__(self):
        coefficients = self.to_gdal()
        if not all(math.isfinite(c) for c in coefficients):
            raise ConfigurationError(f"Geotransform coefficients must be finite: {coefficients}")
        if self.pixel_width <= 0:
            raise ConfigurationError("Geotransform pixel_width must be greater than 0")
        if self.pixel_height == 0:
            raise ConfigurationError("Geotransform pixel_height must not be 0")
        if self.determinant == 0:
            raise ConfigurationError("Geotransform is singular (determinant is 0)")

    @classmethod
    def from_gdal(cls, coefficients: Sequence[float], epsg: int) -> "GeoTransform":
        if len(coefficients) != 6:
            raise ConfigurationError(
                f"Geotransform needs exactly 6 coefficients, got {len(coefficients)}"
            )
        return cls(*[float(c) for c in coefficients], epsg=int(epsg))

    def to_gdal(self) -> tuple[float, float, float, float, float, float]:
        return (
            self.origin_x,
            self.pixel_width,
            self.row_rotation,
            self.origin_y,
            self.col_rotation,
            self.pixel_height,
        )

    @property
    def determinant(self) -> float:
        return self.pixel_width * self.pixel_height - self.row_rotation * self.col_rotation

    def pixel_to_geo(self, col, row):
        """
        Converts pixel coordinates to CRS coordinates. Accepts scalars or numpy arrays.

        Args:
            col: Column (fractional pixels allowed)
            row: Row (fractional pixels allowed)

        Returns:
            Tuple of (x, y) in CRS units
        """
        x = self.origin_x + col * self.pixel_width + row * self.row_rotation
        y = self.origin_y + col * self.col_rotation + row * self.pixel_height
        return x, y

    def geo_to_pixel(self, x, y):
        """Inverse of `pixel_to_geo`, computed by inverting the 2x2 linear part"""
        det = self.determinant
        dx = x - self.origin_x
        dy = y - self.origin_y
        col = (self.pixel_height * dx - self.row_rotation * dy) / det
        row = (self.pixel_width * dy - self.col_rotation * dx) / det
        return col, row

    def bounds(self, width: int, height: int) -> tuple[float, float, float, float]:
        """Returns (min_x, min_y, max_x, max_y) of a `width` x `height` raster in CRS units"""
        cols = np.array([0, width, width, 0], dtype=float)
        rows = np.array([0, 0, height, height], dtype=float)
        xs, ys = self.pixel_to_geo(cols, rows)
        return float(xs.min()), float(ys.min()), float(xs.max()), float(ys.max())

    @property
    def pixel_area(self) -> float:
        """Area of one pixel in squared CRS units"""
        return abs(self.determinant)
