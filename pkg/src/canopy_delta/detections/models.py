from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from canopy_delta.geometry import bbox, dedupe_vertices

BOX_TOLERANCE_PX = 0.5


class Detection(BaseModel):
    """
    One instance predicted by an external segmentation model on one tile.

    All geometry is in tile pixels (origin top-left).
    """

    model_config = ConfigDict(frozen=True)

    tile: str
    """Tile identifier, `"z/x/y"`"""

    label: str = "tree"

    score: float
    """Confidence score, 0...1"""

    bbox: tuple[float, float, float, float]
    """Bounding box as (x, y, width, height)"""

    polygon: list[tuple[float, float]]
    """Instance outline as (x, y) pixel coordinates"""

    @field_validator("score", mode="after")
    @classmethod
    def _check_score(cls, score):
        if not (0.0 <= score <= 1.0):
            raise ValueError("score out of range")
        return score

    @field_validator("polygon", mode="after")
    @classmethod
    def _check_polygon(cls, polygon):
        polygon = dedupe_vertices(polygon)
        if len(polygon) < 3:
            raise ValueError("polygon needs at least 3 distinct vertices")
        return polygon

    @model_validator(mode="after")
    def _check_box(self):
        x, y, w, h = self.bbox
        if not (w > 0 and h > 0):
            raise ValueError("bbox width and height must be greater than 0")

        min_x, min_y, max_x, max_y = bbox(self.polygon)
        t = BOX_TOLERANCE_PX
        if min_x < x - t or min_y < y - t or max_x > x + w + t or max_y > y + h + t:
            raise ValueError("bbox does not contain the polygon")
        return self

    def to_record(self) -> dict:
        return {
            "tile": self.tile,
            "label": self.label,
            "score": self.score,
            "bbox": list(self.bbox),
            "polygon": [[x, y] for x, y in self.polygon],
        }


class TreeInstance(BaseModel):
    """One tree crown located on the ground"""

    model_config = ConfigDict(frozen=True)

    id: str
    """Stable identifier"""

    polygon: list[tuple[float, float]]
    """Crown outline in lon/lat degrees"""

    centroid: tuple[float, float]
    """Crown centroid in lon/lat degrees"""

    projected_polygon: list[tuple[float, float]]
    """Crown outline in the projected CRS (meters)"""

    projected_centroid: tuple[float, float]
    """Crown centroid in the projected CRS (meters)"""

    epsg: int
    """EPSG code of the projected CRS"""

    area_m2: float = Field(gt=0)
    """Crown area in square meters (planar, projected CRS)"""

    score: float = Field(ge=0, le=1)

    epoch: str = Field(min_length=1)
    """Acquisition date tag of the epoch this tree was observed in"""

    label: str = "tree"

    tile: str | None = None
    """Tile the instance was detected on (`"z/x/y"`); for merged instances, the tile of the kept member"""

    @model_validator(mode="after")
    def _check_centroid(self):
        min_x, min_y, max_x, max_y = bbox(self.projected_polygon)
        x, y = self.projected_centroid
        eps = 1e-6
        if not (min_x - eps <= x <= max_x + eps and min_y - eps <= y <= max_y + eps):
            raise ValueError("centroid lies outside the polygon's bounding box")
        return self

    @property
    def projected_bounds(self) -> tuple[float, float, float, float]:
        return bbox(self.projected_polygon)

    @property
    def geographic_bounds(self) -> tuple[float, float, float, float]:
        return bbox(self.polygon)
