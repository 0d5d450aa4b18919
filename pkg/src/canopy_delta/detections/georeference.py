import numpy as np

from canopy_delta.detections.models import Detection, TreeInstance
from canopy_delta.exceptions import ConfigurationError, DegeneratePolygonError
from canopy_delta.geometry import centroid, shoelace_area
from canopy_delta.raster import crs
from canopy_delta.raster.geotransform import GeoTransform
from canopy_delta.raster.tiler import TileManifest, TileRecord
from canopy_delta.raster.tiles import TileIndex, tile_geotransform


def _resolve_tile(tile, manifest: TileManifest = None) -> tuple[GeoTransform, TileRecord | None]:
    if isinstance(tile, TileRecord):
        return tile.transform, tile
    if isinstance(tile, GeoTransform):
        return tile, None
    if manifest is not None:
        record = manifest.get(str(tile))
        return record.transform, record
    if isinstance(tile, str):
        tile = TileIndex.parse(tile)
    return tile_geotransform(tile), None


def georeference(
    detection: Detection,
    tile: TileRecord | GeoTransform | TileIndex | str = None,
    manifest: TileManifest = None,
    epoch: str = None,
    instance_id: str = None,
    projected_epsg: int = None,
) -> TreeInstance:
    """
    Places a tile-pixel detection on the ground.

    Polygon vertices go pixel -> tile CRS through the tile's geotransform, then to lon/lat and to a
    projected metric CRS where centroid and area (shoelace) are computed.

    Args:
        detection: Detection in tile pixels
        tile: Tile record, geotransform, index or `"z/x/y"` id. Defaults to `detection.tile`.
        manifest: Tile manifest used to look up `tile` when it is an index or id
        epoch: Epoch tag. Defaults to the epoch recorded in the manifest.
        instance_id: Identifier of the returned instance. Defaults to `"{epoch}/{tile}"`.
        projected_epsg: Metric CRS for centroid and area. Defaults to the scene CRS when it is
            metric, else the UTM zone at the detection.

    Raises:
        ManifestLookupError: if the tile is not in the manifest
        DegeneratePolygonError: if the georeferenced polygon has no area
    """
    tile = detection.tile if tile is None else tile
    transform, record = _resolve_tile(tile, manifest)

    epoch = epoch or (record.epoch if record else None)
    if not epoch:
        raise ConfigurationError(f"No epoch tag for detection on tile {detection.tile}")

    cols, rows = np.array(detection.polygon, dtype=np.float64).T
    xs, ys = transform.pixel_to_geo(cols, rows)
    lons, lats = (np.asarray(v, dtype=np.float64) for v in crs.transform(xs, ys, transform.epsg, crs.WGS84))

    if projected_epsg is None:
        base = record.scene_epsg if record else transform.epsg
        projected_epsg = crs.metric_epsg_for(base, float(lons.mean()), float(lats.mean()))

    pxs, pys = (np.asarray(v, dtype=np.float64) for v in crs.transform(xs, ys, transform.epsg, projected_epsg))
    projected = list(zip(pxs.tolist(), pys.tolist()))

    area = shoelace_area(projected)
    if not area > 0:
        raise DegeneratePolygonError(f"Detection on tile {detection.tile} has zero ground area")

    cx, cy = centroid(projected)
    clon, clat = crs.transform(cx, cy, projected_epsg, crs.WGS84)

    return TreeInstance(
        id=instance_id or f"{epoch}/{detection.tile}",
        polygon=list(zip(lons.tolist(), lats.tolist())),
        centroid=(float(clon), float(clat)),
        projected_polygon=projected,
        projected_centroid=(cx, cy),
        epsg=projected_epsg,
        area_m2=area,
        score=detection.score,
        epoch=epoch,
        label=detection.label,
        tile=detection.tile,
    )
