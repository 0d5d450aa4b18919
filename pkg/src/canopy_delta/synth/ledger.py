import json

from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError

from canopy_delta.detections.models import TreeInstance
from canopy_delta.exceptions import ConfigurationError, SynthesisError
from canopy_delta.geometry import centroid, shoelace_area
from canopy_delta.raster import crs
from canopy_delta.raster.geotransform import GeoTransform
from canopy_delta.synth.spec import SynthSpec

OUTLINE_VERTICES = 64
"""Vertices of the regular polygon that stands in for a circular crown"""

Fate = Literal["persisted", "removed", "added"]


def circle_outline(
    center: tuple[float, float], radius, vertices: int = OUTLINE_VERTICES
) -> list[tuple[float, float]]:
    """
    Regular polygon around `center`. `radius` is a scalar or one radius per vertex.

    Vertices run counter-clockwise from east in a y-up CRS.
    """
    angles = 2 * np.pi * np.arange(vertices) / vertices
    radii = np.broadcast_to(np.asarray(radius, dtype=np.float64), angles.shape)
    xs = center[0] + radii * np.cos(angles)
    ys = center[1] + radii * np.sin(angles)
    return list(zip(xs.tolist(), ys.tolist()))


class LedgerTree(BaseModel):
    """Ground truth of one synthetic tree"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    id: str
    fate: Fate
    radius_m: float
    centers: dict[str, tuple[float, float]]
    """Crown centre in the scene CRS, per epoch the tree exists in"""

    areas_m2: dict[str, float]
    """Crown area counted from rasterized pixels, per epoch"""

    def present_in(self, epoch: str) -> bool:
        return epoch in self.centers

    def outline(self, epoch: str) -> list[tuple[float, float]]:
        return circle_outline(self.centers[epoch], self.radius_m)


class TruthLedger(BaseModel):
    """Everything the generator knows about a synthetic scene pair"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    spec: SynthSpec
    epsg: int
    geotransform: tuple[float, float, float, float, float, float]
    width: int
    height: int
    trees: list[LedgerTree]
    """Every tree of both epochs, sorted by id"""

    @property
    def epochs(self) -> tuple[str, str]:
        return self.spec.epoch_tags

    @property
    def transform(self) -> GeoTransform:
        return GeoTransform.from_gdal(self.geotransform, self.epsg)

    def epoch_index(self, epoch: str) -> int:
        try:
            return self.epochs.index(epoch)
        except ValueError:
            raise ConfigurationError(f"Epoch {epoch} is not one of the ledger epochs {self.epochs}")

    def present(self, epoch: str) -> list[LedgerTree]:
        """Trees that exist in an epoch, sorted by id"""
        self.epoch_index(epoch)
        return [t for t in self.trees if t.present_in(epoch)]

    def fates(self) -> dict[str, set[str]]:
        """Tree ids per fate"""
        result = {"persisted": set(), "removed": set(), "added": set()}
        for tree in self.trees:
            result[tree.fate].add(tree.id)
        return result

    def write(self, path: Path | str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.model_dump(mode="json"), indent=1) + "\n")
        return path

    @classmethod
    def read(cls, path: Path | str) -> "TruthLedger":
        path = Path(path)
        try:
            return cls.model_validate_json(path.read_text())
        except FileNotFoundError:
            raise SynthesisError(f"Truth ledger not found: {path}")
        except ValidationError as e:
            raise SynthesisError(f"Invalid truth ledger {path}: {e}")


def ledger_instances(ledger: TruthLedger, epoch: str) -> list[TreeInstance]:
    """
    True crowns of one epoch as tree instances (score 1, ids from the ledger).

    Instances are in the ledger's scene CRS, so they can be matched across epochs directly.
    """
    instances = []
    for tree in ledger.present(epoch):
        projected = tree.outline(epoch)
        xs, ys = zip(*projected)
        lons, lats = crs.transform(list(xs), list(ys), ledger.epsg, crs.WGS84)
        cx, cy = centroid(projected)
        clon, clat = crs.transform(cx, cy, ledger.epsg, crs.WGS84)
        instances.append(
            TreeInstance(
                id=tree.id,
                polygon=list(zip(map(float, lons), map(float, lats))),
                centroid=(float(clon), float(clat)),
                projected_polygon=projected,
                projected_centroid=(cx, cy),
                epsg=ledger.epsg,
                area_m2=shoelace_area(projected),
                score=1.0,
                epoch=epoch,
            )
        )
    return instances
