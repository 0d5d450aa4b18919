import json
import math

from datetime import date
from functools import cached_property
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from canopy_delta.exceptions import CanopyDeltaError, RasterReadError
from canopy_delta.raster.geotransform import GeoTransform

SAMPLE_TYPES = {
    "u8": np.dtype("<u1"),
    "u16": np.dtype("<u2"),
}

SIDECAR_SUFFIX = ".scene.json"
RAW_SUFFIX = ".raw"


class SceneDescriptor(BaseModel):
    """
    Metadata of one georeferenced scene.

    The JSON sidecar uses the short names (`bands`, `dtype`, `geotransform`, `epsg`, `date`,
    `gsd_m`); the Python attributes use the long names.

    Example sidecar:

    ```json
    {
        "width": 1024, "height": 1024, "bands": 4, "dtype": "u16",
        "geotransform": [500000.0, 0.5, 0.0, 2550000.0, 0.0, -0.5],
        "epsg": 32643, "date": "2018-12-07", "gsd_m": 0.5
    }
    ```
    """

    model_config = ConfigDict(
        extra="forbid", populate_by_name=True, frozen=True, ignored_types=(cached_property,)
    )

    width: int = Field(ge=1)
    """Width in pixels"""

    height: int = Field(ge=1)
    """Height in pixels"""

    band_count: int = Field(alias="bands", ge=1)
    """Number of bands"""

    sample_type: Literal["u8", "u16"] = Field(alias="dtype")
    """Sample type of every band"""

    geotransform: tuple[float, float, float, float, float, float]
    """Affine coefficients in GDAL order"""

    epsg: int
    """EPSG code of the scene CRS"""

    acquisition_date: date = Field(alias="date")
    """Acquisition date (ISO-8601)"""

    nominal_gsd: float = Field(alias="gsd_m", gt=0)
    """Ground sample distance in meters per pixel"""

    @model_validator(mode="after")
    def _check_transform(self):
        try:
            transform = GeoTransform.from_gdal(self.geotransform, self.epsg)
        except CanopyDeltaError as e:
            raise ValueError(str(e))

        min_x, min_y, max_x, max_y = transform.bounds(self.width, self.height)
        if not all(math.isfinite(v) for v in (min_x, min_y, max_x, max_y)):
            raise ValueError("Scene bounding box is not finite")
        if not (max_x > min_x and max_y > min_y):
            raise ValueError("Scene bounding box is degenerate")
        return self

    @cached_property
    def transform(self) -> GeoTransform:
        return GeoTransform.from_gdal(self.geotransform, self.epsg)

    @property
    def numpy_dtype(self) -> np.dtype:
        return SAMPLE_TYPES[self.sample_type]

    @property
    def epoch(self) -> str:
        return self.acquisition_date.isoformat()

    def bounds(self) -> tuple[float, float, float, float]:
        """Bounding box in scene CRS units as (min_x, min_y, max_x, max_y)"""
        return self.transform.bounds(self.width, self.height)

    def to_sidecar(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "bands": self.band_count,
            "dtype": self.sample_type,
            "geotransform": list(self.geotransform),
            "epsg": self.epsg,
            "date": self.acquisition_date.isoformat(),
            "gsd_m": self.nominal_gsd,
        }


def scene_paths(path: Path | str) -> tuple[Path, Path]:
    """
    Returns (raw_path, sidecar_path) of a scene.

    `path` can be the raw file, the sidecar or the shared stem (`data/ahmedabad_2018`).
    """
    path = Path(path)
    name = path.name
    if name.endswith(SIDECAR_SUFFIX):
        stem = name[: -len(SIDECAR_SUFFIX)]
    elif name.endswith(RAW_SUFFIX):
        stem = name[: -len(RAW_SUFFIX)]
    else:
        stem = name
    return path.with_name(stem + RAW_SUFFIX), path.with_name(stem + SIDECAR_SUFFIX)


def read_descriptor(path: Path | str) -> SceneDescriptor:
    _, sidecar_path = scene_paths(path)
    try:
        document = json.loads(sidecar_path.read_text())
    except FileNotFoundError:
        raise RasterReadError(f"Scene sidecar not found: {sidecar_path}")
    except json.JSONDecodeError as e:
        raise RasterReadError(f"Scene sidecar {sidecar_path} is not valid JSON: {e}")

    try:
        return SceneDescriptor.model_validate(document)
    except ValidationError as e:
        raise RasterReadError(f"Invalid scene sidecar {sidecar_path}: {e}")


def read_scene(path: Path | str) -> tuple[SceneDescriptor, np.ndarray]:
    """
    Reads a scene stored as band-sequential raw samples plus a JSON sidecar.

    Returns:
        Tuple of (descriptor, samples) where samples has shape (bands, height, width)
    """
    raw_path, _ = scene_paths(path)
    scene = read_descriptor(path)

    expected = scene.band_count * scene.height * scene.width
    try:
        samples = np.fromfile(raw_path, dtype=scene.numpy_dtype)
    except FileNotFoundError:
        raise RasterReadError(f"Scene raster not found: {raw_path}")

    if samples.size != expected:
        raise RasterReadError(
            f"Scene raster {raw_path} holds {samples.size} samples, sidecar declares {expected}"
        )

    return scene, samples.reshape(scene.band_count, scene.height, scene.width)


def write_scene(path: Path | str, scene: SceneDescriptor, samples: np.ndarray) -> tuple[Path, Path]:
    """Writes a scene's raw samples and sidecar. Returns (raw_path, sidecar_path)."""
    expected_shape = (scene.band_count, scene.height, scene.width)
    if samples.shape != expected_shape:
        raise ValueError(f"Samples have shape {samples.shape}, expected {expected_shape}")

    raw_path, sidecar_path = scene_paths(path)
    raw_path.parent.mkdir(parents=True, exist_ok=True)
    np.ascontiguousarray(samples, dtype=scene.numpy_dtype).tofile(raw_path)
    sidecar_path.write_text(json.dumps(scene.to_sidecar(), indent=2) + "\n")
    return raw_path, sidecar_path
