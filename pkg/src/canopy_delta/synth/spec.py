import json

from datetime import date
from pathlib import Path

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from canopy_delta.exceptions import ConfigurationError
from canopy_delta.raster import crs
from canopy_delta.raster.tiles import MAX_LATITUDE

EPOCHS = (date(2011, 1, 25), date(2018, 12, 7))
"""Default acquisition dates of the two synthetic epochs"""

AHMEDABAD_EXTENT = (72.5, 23.0, 72.503, 23.003)

# stream ids for numpy.random.default_rng([seed, stream])
LAYOUT_STREAM = 0
TEXTURE_STREAM = 1
EDIT_STREAM = 2
DETECTOR_STREAM = 10
DITHER_STREAM = 20


class EditPlan(BaseModel):
    """How the later epoch differs from the earlier one"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    removed: float = Field(default=0.1, ge=0.0, le=1.0)
    """Fraction of trees removed"""

    added: float = Field(default=0.1, ge=0.0, le=1.0)
    """Number of new trees, as a fraction of the tree count"""

    jittered: float = Field(default=0.2, ge=0.0, le=1.0)
    """Fraction of surviving trees whose mapped centre moves"""

    jitter_sigma_m: float = Field(default=0.3, ge=0.0)
    """Standard deviation of the centre displacement per axis. Displacements are cut at 3 sigma."""


class DetectorNoise(BaseModel):
    """Error model of the simulated detector"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    score_alpha: float = Field(default=8.0, gt=0)
    score_beta: float = Field(default=2.0, gt=0)
    """Scores are drawn from Beta(score_alpha, score_beta)"""

    miss_rate: float = Field(default=0.0, ge=0.0, le=1.0)
    false_positive_rate: float = Field(default=0.0, ge=0.0, le=1.0)
    """Expected false positives per true tree"""

    boundary_noise_px: float = Field(default=0.0, ge=0.0)
    """Standard deviation of the radial outline noise, in scene pixels"""

    false_positive_radius_m: tuple[float, float] = (1.5, 3.0)

    @field_validator("false_positive_radius_m", mode="after")
    @classmethod
    def _check_radius(cls, value):
        low, high = value
        if not (0 < low <= high):
            raise ValueError("false positive radius range must satisfy 0 < low <= high")
        return value


class SynthSpec(BaseModel):
    """
    Parameters of a synthetic bi-temporal scene.

    All randomness is drawn from `numpy.random.default_rng([seed, stream])` with one fixed stream
    per artifact: 0 tree layout, 1 background texture, 2 epoch edits, 10 + epoch index detector
    noise, 20 + epoch index rendering dither.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    seed: int = 0

    extent: tuple[float, float, float, float] = AHMEDABAD_EXTENT
    """Scene extent in lon/lat degrees as (west, south, east, north)"""

    gsd_m: float = Field(default=0.5, gt=0)

    tree_count: int = Field(default=50, ge=0)

    crown_radius_m: tuple[float, float] = (2.0, 4.0)

    min_spacing_m: float = Field(default=12.0, ge=0)
    """Smallest distance between the centres of any two trees of either epoch"""

    edits: EditPlan = EditPlan()

    detector: DetectorNoise = DetectorNoise()

    epochs: tuple[date, date] = EPOCHS

    epsg: int | None = None
    """Projected CRS of the scene. Defaults to the UTM zone at the extent centre."""

    @field_validator("crown_radius_m", mode="after")
    @classmethod
    def _check_radius(cls, value):
        low, high = value
        if not (0 < low <= high):
            raise ValueError("crown radius range must satisfy 0 < low <= high")
        return value

    @model_validator(mode="after")
    def _check_extent(self):
        west, south, east, north = self.extent
        if not (west < east and south < north):
            raise ValueError("extent is degenerate")
        if not (-180 <= west and east <= 180 and -MAX_LATITUDE <= south and north <= MAX_LATITUDE):
            raise ValueError("extent is outside the web-mercator range")
        if not self.epochs[0] < self.epochs[1]:
            raise ValueError("epochs must be in chronological order")
        if self.epsg is not None and (self.epsg == crs.WEB_MERCATOR or crs.is_geographic(self.epsg)):
            raise ValueError(f"EPSG:{self.epsg} is not a metric CRS")
        return self

    @property
    def scene_epsg(self) -> int:
        if self.epsg is not None:
            return self.epsg
        west, south, east, north = self.extent
        return crs.utm_epsg_for((west + east) / 2, (south + north) / 2)

    @property
    def epoch_tags(self) -> tuple[str, str]:
        return tuple(e.isoformat() for e in self.epochs)

    @classmethod
    def from_file(cls, path: Path | str) -> "SynthSpec":
        """Reads a spec from a JSON or YAML document"""
        path = Path(path)
        try:
            document = yaml.safe_load(path.read_text())
        except FileNotFoundError:
            raise ConfigurationError(f"Synth spec not found: {path}")
        except yaml.YAMLError as e:
            raise ConfigurationError(f"Synth spec {path} is not valid JSON or YAML: {e}")

        try:
            return cls.model_validate(document or {})
        except ValidationError as e:
            raise ConfigurationError(f"Invalid synth spec {path}: {e}")

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2)
