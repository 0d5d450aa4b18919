from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import geopandas as gpd
import numpy as np
from shapely.geometry import MultiPolygon, Polygon
from shapely.geometry.base import BaseGeometry

from canopy_delta.change.models import ChangeRecord, RegionReport
from canopy_delta.detections.models import TreeInstance
from canopy_delta.exceptions import ConfigurationError
from canopy_delta.geometry import open_ring, points_in_polygon
from canopy_delta.log import LOGGER
from canopy_delta.raster import crs

SCENE_REGION_ID = "scene"


@dataclass(frozen=True, slots=True)
class Region:
    id: str
    geometry: Polygon | MultiPolygon
    """Region outline in lon/lat degrees"""


def _as_geometry(region) -> BaseGeometry:
    if isinstance(region, Region):
        return region.geometry
    if isinstance(region, BaseGeometry):
        return region
    return Polygon(region)


def _rings(geometry: BaseGeometry) -> list[list[tuple[float, float]]]:
    polygons = geometry.geoms if isinstance(geometry, MultiPolygon) else [geometry]
    rings = []
    for p in polygons:
        rings.append(open_ring(p.exterior.coords))
        rings.extend(open_ring(r.coords) for r in p.interiors)
    return rings


def contains_points(region, lons, lats) -> np.ndarray:
    """
    Even-odd containment of lon/lat points in a region (every ring of every part toggles).

    Raises:
        ConfigurationError: if the region outline intersects itself
    """
    geometry = _as_geometry(region)
    if geometry.geom_type not in ("Polygon", "MultiPolygon"):
        raise ConfigurationError(f"Regions must be polygons, got {geometry.geom_type}")
    for ring in _rings(geometry):
        if len(ring) < 3 or not Polygon(ring).exterior.is_simple:
            raise ConfigurationError("Region polygon is self-intersecting or degenerate")

    lons = np.asarray(lons, dtype=np.float64)
    lats = np.asarray(lats, dtype=np.float64)
    inside = np.zeros(lons.shape, dtype=bool)
    for ring in _rings(geometry):
        inside ^= points_in_polygon(ring, lons, lats)
    return inside


def count_trees(instances: list[TreeInstance], region=None) -> tuple[int, float]:
    """
    Number of instances whose centroid lies in the region, and their total canopy area (m^2).

    Without a region the whole scene is counted.
    """
    if not instances:
        return 0, 0.0
    if region is None:
        return len(instances), float(sum(i.area_m2 for i in instances))

    lons = [i.centroid[0] for i in instances]
    lats = [i.centroid[1] for i in instances]
    inside = contains_points(region, lons, lats)
    area = sum(i.area_m2 for i, hit in zip(instances, inside) if hit)
    return int(inside.sum()), float(area)


def read_regions(path: Path | str) -> list[Region]:
    """
    Reads region polygons from a GeoJSON file.

    Each feature's `id` (or `region`) property names the region; features without one are
    numbered in file order.
    """
    frame = gpd.read_file(path)
    if frame.crs is not None and frame.crs.to_epsg() != crs.WGS84:
        frame = frame.to_crs(epsg=crs.WGS84)

    regions = []
    for n, row in enumerate(frame.itertuples(index=False), start=1):
        attributes = row._asdict()
        region_id = attributes.get("id")
        if region_id is None or (isinstance(region_id, float) and np.isnan(region_id)):
            region_id = attributes.get("region")
        if region_id is None or (isinstance(region_id, float) and np.isnan(region_id)):
            region_id = n
        regions.append(Region(id=str(region_id), geometry=row.geometry))
    return regions


def overlapping_regions(regions: list[Region]) -> list[tuple[str, str]]:
    """Pairs of regions whose interiors overlap"""
    return [
        (a.id, b.id)
        for a, b in combinations(regions, 2)
        if a.geometry.intersection(b.geometry).area > 0
    ]


def _report(region_id: str, polygon, records: list[ChangeRecord]) -> RegionReport:
    report = {"persisted": 0, "gained": 0, "lost": 0}
    earlier_area = later_area = 0.0
    for r in records:
        report[r.verdict] += 1
        if r.earlier is not None:
            earlier_area += r.earlier.area_m2
        if r.later is not None:
            later_area += r.later.area_m2

    return RegionReport(
        region_id=region_id,
        polygon=polygon,
        earlier_count=report["persisted"] + report["lost"],
        later_count=report["persisted"] + report["gained"],
        earlier_area_m2=earlier_area,
        later_area_m2=later_area,
        **report,
    )


def region_report(records: list[ChangeRecord], regions: list[Region] = ()) -> list[RegionReport]:
    """
    Scene-level report followed by one report per region.

    Each record is attributed by the centroid of its later instance (persisted, gained) or of
    its earlier instance (lost), so a persisted tree is counted in exactly one region. Epoch
    counts and canopy areas in a region are those of the records attributed to it.
    """
    reports = [_report(SCENE_REGION_ID, None, records)]
    if not regions:
        return reports

    for a, b in overlapping_regions(list(regions)):
        LOGGER.warning(f"regions {a} and {b} overlap; trees in the overlap are counted in both")

    lons = [r.instance.centroid[0] for r in records]
    lats = [r.instance.centroid[1] for r in records]
    for region in regions:
        inside = contains_points(region, lons, lats) if records else np.zeros(0, dtype=bool)
        exterior = region.geometry
        if isinstance(exterior, MultiPolygon):
            exterior = max(exterior.geoms, key=lambda p: p.area)
        reports.append(
            _report(
                region.id,
                open_ring(exterior.exterior.coords),
                [r for r, hit in zip(records, inside) if hit],
            )
        )
    return reports
