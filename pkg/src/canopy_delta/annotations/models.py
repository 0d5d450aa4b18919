from dataclasses import dataclass, field

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from canopy_delta.exceptions import DegeneratePolygonError, RejectedRecord
from canopy_delta.geometry import dedupe_vertices, is_simple

TILE_PIXELS = 512


class PolygonAnnotation(BaseModel):
    """
    One labelled polygon drawn on an image.

    Vertices are pixel coordinates with the origin at the image's top-left corner. Consecutive
    duplicate vertices are removed on construction. Polygons that still touch or cross themselves
    after that cleanup are rejected.
    """

    model_config = ConfigDict(frozen=True)

    label: str
    """Class label, e.g. `"tree"`"""

    vertices: list[tuple[float, float]]
    """Polygon outline as (x, y) pixel coordinates, without a repeated closing vertex"""

    image_id: str
    """Identifier of the source image"""

    image_width: int = Field(default=TILE_PIXELS, ge=1)
    image_height: int = Field(default=TILE_PIXELS, ge=1)

    @field_validator("vertices", mode="after")
    @classmethod
    def _cleanup(cls, vertices):
        return dedupe_vertices(vertices)

    @model_validator(mode="after")
    def _check_polygon(self):
        if len(self.vertices) < 3:
            raise ValueError(f"polygon has {len(self.vertices)} distinct vertices, needs at least 3")

        for x, y in self.vertices:
            if not (0 <= x <= self.image_width and 0 <= y <= self.image_height):
                raise ValueError(
                    f"vertex ({x}, {y}) is outside the {self.image_width}x{self.image_height} image"
                )

        if not is_simple(self.vertices):
            raise ValueError("polygon is self-intersecting")

        return self


@dataclass(slots=True)
class InstanceMask:
    """Binary pixel mask of one instance"""

    grid: np.ndarray
    """Boolean grid with shape (height, width)"""

    image_id: str = None

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=bool)
        if not self.grid.any():
            raise DegeneratePolygonError(f"Instance mask of image {self.image_id} is empty")

    @property
    def area(self) -> int:
        """Number of set pixels"""
        return int(np.count_nonzero(self.grid))

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape


@dataclass
class AnnotationDocument:
    """Polygons parsed from one annotation document, plus what was skipped"""

    image_id: str
    image_width: int
    image_height: int
    annotations: list[PolygonAnnotation] = field(default_factory=list)

    skipped: int = 0
    """Number of non-polygon shapes that were skipped (each one also logged as a warning)"""

    rejected: list[RejectedRecord] = field(default_factory=list)
    """Polygon shapes that failed validation"""

    def __len__(self):
        return len(self.annotations)

    def __iter__(self):
        return iter(self.annotations)

    def __getitem__(self, i):
        return self.annotations[i]
