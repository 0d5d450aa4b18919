import json

from pathlib import Path

import geopandas as gpd
from shapely.geometry import Polygon

from canopy_delta.detections.models import TreeInstance
from canopy_delta.exceptions import DetectionSchemaError
from canopy_delta.raster import crs


def instances_frame(instances: list[TreeInstance]) -> gpd.GeoDataFrame:
    """Builds a lon/lat GeoDataFrame with one row per instance"""
    data = {
        "id": [i.id for i in instances],
        "score": [i.score for i in instances],
        "area_m2": [i.area_m2 for i in instances],
        "epoch": [i.epoch for i in instances],
        "epsg": [i.epsg for i in instances],
        "x_m": [i.projected_centroid[0] for i in instances],
        "y_m": [i.projected_centroid[1] for i in instances],
        "label": [i.label for i in instances],
        "tile": [i.tile for i in instances],
    }
    geometry = gpd.GeoSeries([Polygon(i.polygon) for i in instances], crs=f"EPSG:{crs.WGS84}")
    return gpd.GeoDataFrame(data, geometry=geometry)


def write_instances(instances: list[TreeInstance], path: Path | str) -> Path:
    """Writes instances as a GeoJSON FeatureCollection of lon/lat polygons"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(instances_frame(instances).to_json(drop_id=True) + "\n")
    return path


def _from_feature(feature) -> TreeInstance:
    props = feature["properties"]
    polygon = [(float(x), float(y)) for x, y in feature["geometry"]["coordinates"][0][:-1]]
    epsg = int(props["epsg"])
    xs, ys = zip(*polygon)
    pxs, pys = crs.transform(list(xs), list(ys), crs.WGS84, epsg)
    cx, cy = float(props["x_m"]), float(props["y_m"])
    clon, clat = crs.transform(cx, cy, epsg, crs.WGS84)
    return TreeInstance(
        id=str(props["id"]),
        polygon=polygon,
        centroid=(float(clon), float(clat)),
        projected_polygon=list(zip(map(float, pxs), map(float, pys))),
        projected_centroid=(cx, cy),
        epsg=epsg,
        area_m2=float(props["area_m2"]),
        score=float(props["score"]),
        epoch=str(props["epoch"]),
        label=str(props.get("label") or "tree"),
        tile=props.get("tile"),
    )


def read_instances(path: Path | str) -> list[TreeInstance]:
    """
    Reads instances written by `write_instances`.

    Raises:
        DetectionSchemaError: if the file is not a FeatureCollection of instance polygons
    """
    path = Path(path)
    try:
        document = json.loads(path.read_text())
    except FileNotFoundError:
        raise DetectionSchemaError(f"Instances file not found: {path}")
    except json.JSONDecodeError as e:
        raise DetectionSchemaError(f"Instances file {path} is not valid JSON: {e}")

    if document.get("type") != "FeatureCollection":
        raise DetectionSchemaError(f"{path} is not a GeoJSON FeatureCollection")

    try:
        return [_from_feature(f) for f in document.get("features", [])]
    except (KeyError, TypeError, ValueError, IndexError) as e:
        raise DetectionSchemaError(f"{path} has a malformed instance feature: {e}")
