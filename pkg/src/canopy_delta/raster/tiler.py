import json
import multiprocessing as mp

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from pydantic import BaseModel, ConfigDict
from shapely.geometry import Polygon, box

from canopy_delta.config import settings
from canopy_delta.exceptions import (
    ConfigurationError,
    EmptyTilingError,
    ManifestLookupError,
    RasterReadError,
    TileWriteError,
)
from canopy_delta.log import LOGGER
from canopy_delta.profile import profile
from canopy_delta.raster import crs
from canopy_delta.raster.geotransform import GeoTransform
from canopy_delta.raster.scene import SceneDescriptor
from canopy_delta.raster.stretch import apply_stretch, percentile_limits
from canopy_delta.raster.tiles import (
    TILE_SIZE,
    TileIndex,
    tile_bounds,
    tile_geotransform,
    tile_range,
)

DEFAULT_ZOOM_RANGE = (18, 19)

MANIFEST_NAME = "manifest.json"

MIN_OVERLAP_FRACTION = 1e-7
"""Tiles whose overlap with the footprint is below this fraction of the tile area are only touching it"""


@dataclass(slots=True)
class RasterTile:
    """One 512x512 tile cut from a scene"""

    index: TileIndex
    samples: np.ndarray
    """Samples with shape (bands, 512, 512), in the scene's sample type"""

    scene: SceneDescriptor
    transform: GeoTransform
    """Geotransform of the tile grid (EPSG:3857)"""

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return tile_bounds(self.index)


class TileRecord(BaseModel):
    """One entry of a tile manifest"""

    model_config = ConfigDict(extra="ignore", frozen=True)

    z: int
    x: int
    y: int
    path: str
    """PNG path relative to the manifest"""

    bounds: tuple[float, float, float, float]
    """Geographic bounds as [west, south, east, north]"""

    raw: str | None = None
    """Optional raw payload path relative to the manifest"""

    geotransform: tuple[float, float, float, float, float, float]
    epsg: int = crs.WEB_MERCATOR
    nodata: int = 0
    scene_epsg: int
    epoch: str

    @property
    def index(self) -> TileIndex:
        return TileIndex(self.z, self.x, self.y)

    @property
    def tile_id(self) -> str:
        return f"{self.z}/{self.x}/{self.y}"

    @property
    def transform(self) -> GeoTransform:
        return GeoTransform.from_gdal(self.geotransform, self.epsg)


class TileManifest:
    """Tile records of one tiling run, addressable by `"z/x/y"` identifiers"""

    def __init__(self, records: list[TileRecord], root: Path = None):
        self.records = sorted(records, key=lambda r: (r.z, r.x, r.y))
        self.root = Path(root) if root is not None else None
        self._by_id = {r.tile_id: r for r in self.records}

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __contains__(self, tile_id: str):
        return tile_id in self._by_id

    def get(self, tile_id: str) -> TileRecord:
        try:
            return self._by_id[tile_id]
        except KeyError:
            raise ManifestLookupError(f"Tile {tile_id} is not in the manifest")

    @classmethod
    def read(cls, path: Path | str) -> "TileManifest":
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        try:
            document = json.loads(path.read_text())
        except FileNotFoundError:
            raise RasterReadError(f"Tile manifest not found: {path}")
        except json.JSONDecodeError as e:
            raise RasterReadError(f"Tile manifest {path} is not valid JSON: {e}")
        return cls([TileRecord.model_validate(entry) for entry in document], root=path.parent)

    def write(self, path: Path | str) -> Path:
        path = Path(path)
        document = [record.model_dump() for record in self.records]
        path.write_text(json.dumps(document, indent=2) + "\n")
        return path


def scene_footprint(scene: SceneDescriptor, points_per_edge: int = 16) -> Polygon:
    """Returns the scene outline in lon/lat degrees, with densified edges"""
    steps = np.linspace(0.0, 1.0, points_per_edge, endpoint=False)
    w, h = scene.width, scene.height
    cols = np.concatenate([steps * w, np.full_like(steps, w), (1 - steps) * w, np.zeros_like(steps)])
    rows = np.concatenate([np.zeros_like(steps), steps * h, np.full_like(steps, h), (1 - steps) * h])

    xs, ys = scene.transform.pixel_to_geo(cols, rows)
    lons, lats = crs.transform(xs, ys, scene.epsg, crs.WGS84)
    return Polygon(list(zip(lons, lats)))


def plan_tiles(scene: SceneDescriptor, zoom: int) -> list[TileIndex]:
    """
    Returns every tile of a zoom level that overlaps the scene footprint, sorted by (zoom, x, y).

    No pixels are read, so this also works for scenes that only exist as a descriptor.
    """
    footprint = scene_footprint(scene)
    west, south, east, north = footprint.bounds
    tiles = []
    for tile in tile_range(west, south, east, north, zoom):
        tile_box = box(*tile_bounds(tile))
        if footprint.intersection(tile_box).area > MIN_OVERLAP_FRACTION * tile_box.area:
            tiles.append(tile)
    return tiles


def render_tile(
    scene: SceneDescriptor, samples: np.ndarray, tile: TileIndex, nodata: int = 0
) -> RasterTile:
    """
    Resamples a scene onto a tile grid with nearest-neighbor sampling.

    Each tile pixel takes the value of the scene pixel containing the tile pixel's center. Pixels
    whose center falls outside the scene get `nodata`.
    """
    transform = tile_geotransform(tile)
    centers = np.arange(TILE_SIZE, dtype=np.float64) + 0.5
    cols, rows = np.meshgrid(centers, centers)
    xs, ys = transform.pixel_to_geo(cols, rows)
    xs, ys = crs.transform(xs, ys, crs.WEB_MERCATOR, scene.epsg)

    scene_cols, scene_rows = scene.transform.geo_to_pixel(np.asarray(xs), np.asarray(ys))
    scene_cols = np.floor(scene_cols)
    scene_rows = np.floor(scene_rows)
    inside = (
        np.isfinite(scene_cols)
        & np.isfinite(scene_rows)
        & (scene_cols >= 0)
        & (scene_cols < scene.width)
        & (scene_rows >= 0)
        & (scene_rows < scene.height)
    )

    tile_samples = np.full((scene.band_count, TILE_SIZE, TILE_SIZE), nodata, dtype=samples.dtype)
    src_rows = scene_rows[inside].astype(np.intp)
    src_cols = scene_cols[inside].astype(np.intp)
    tile_samples[:, inside] = samples[:, src_rows, src_cols]

    return RasterTile(index=tile, samples=tile_samples, scene=scene, transform=transform)


def _to_display(samples: np.ndarray, bands: tuple[int, ...], limits) -> Image.Image:
    channels = []
    for band in bands:
        low, high = limits[band]
        channels.append(apply_stretch(samples[band], low, high))

    if len(channels) == 1:
        return Image.fromarray(channels[0], mode="L")
    return Image.fromarray(np.stack(channels, axis=-1), mode="RGB")


# state shared with worker processes (set by the pool initializer)
_job: dict = {}


def _init_job(job: dict) -> None:
    _job.clear()
    _job.update(job)


def _write_tile(tile: TileIndex) -> dict:
    scene = _job["scene"]
    out_dir = _job["out_dir"]
    nodata = _job["nodata"]

    raster_tile = render_tile(scene, _job["samples"], tile, nodata=nodata)
    png_path = Path(str(tile.zoom), str(tile.x), f"{tile.y}.png")
    raw_path = png_path.with_suffix(".raw") if _job["write_raw"] else None

    try:
        (out_dir / png_path).parent.mkdir(parents=True, exist_ok=True)
        image = _to_display(raster_tile.samples, _job["bands"], _job["limits"])
        image.save(out_dir / png_path, format="PNG")
        if raw_path is not None:
            raster_tile.samples.astype(scene.numpy_dtype).tofile(out_dir / raw_path)
    except OSError as e:
        raise TileWriteError(f"Failed to write tile {tile}: {e}")

    return TileRecord(
        z=tile.zoom,
        x=tile.x,
        y=tile.y,
        path=png_path.as_posix(),
        bounds=tile_bounds(tile),
        raw=raw_path.as_posix() if raw_path else None,
        geotransform=raster_tile.transform.to_gdal(),
        nodata=nodata,
        scene_epsg=scene.epsg,
        epoch=scene.epoch,
    ).model_dump()


def _display_limits(samples: np.ndarray, scene: SceneDescriptor, stretch) -> list[tuple[float, float]]:
    if stretch is not None:
        low_pct, high_pct = stretch
        return [percentile_limits(band, low_pct, high_pct) for band in samples]

    high = 255.0 if scene.sample_type == "u8" else 65535.0
    return [(0.0, high)] * scene.band_count


@profile
def tile_scene(
    scene: SceneDescriptor,
    samples: np.ndarray,
    zoom: int,
    out_dir: Path | str,
    stretch: tuple[float, float] | None = (2, 98),
    bands: tuple[int, ...] = None,
    write_raw: bool = False,
    nodata: int = None,
    jobs: int = None,
    zoom_range: tuple[int, int] = DEFAULT_ZOOM_RANGE,
) -> TileManifest:
    """
    Cuts a scene into web-mercator tiles of 512x512 pixels.

    Writes `{z}/{x}/{y}.png` (8-bit display view), optionally `{z}/{x}/{y}.raw` (samples in the
    scene's sample type, band-sequential) and `manifest.json` into `out_dir`.

    Display stretch limits are computed once per band over the whole scene, so neighboring tiles
    share the same radiometric mapping.

    Args:
        scene: Scene descriptor
        samples: Scene samples with shape (bands, height, width)
        zoom: Zoom level
        out_dir: Output directory
        stretch: (low, high) percentiles for the display stretch, or None for a fixed full-range mapping
        bands: Zero-based band indices for the PNG (3 for RGB, 1 for grayscale). Defaults to the first three bands.
        write_raw: Also write raw sample payloads
        nodata: Fill value for pixels outside the scene. Defaults to `settings.nodata`.
        jobs: Worker processes. Defaults to `settings.jobs`. Output is identical for any value.
        zoom_range: Allowed (min, max) zoom levels

    Returns:
        TileManifest of the written tiles, sorted by (zoom, x, y)
    """
    min_zoom, max_zoom = zoom_range
    if not (min_zoom <= zoom <= max_zoom):
        raise ConfigurationError(f"Zoom {zoom} is outside the configured range {min_zoom}-{max_zoom}")

    if samples.shape != (scene.band_count, scene.height, scene.width):
        raise RasterReadError(
            f"Samples have shape {samples.shape}, scene declares "
            f"{(scene.band_count, scene.height, scene.width)}"
        )

    if bands is None:
        bands = tuple(range(min(3, scene.band_count)))
    if len(bands) not in (1, 3) or any(not (0 <= b < scene.band_count) for b in bands):
        raise ConfigurationError(f"Invalid display bands {bands} for a {scene.band_count}-band scene")

    tiles = plan_tiles(scene, zoom)
    if not tiles:
        raise EmptyTilingError(f"Zoom {zoom} produces no tiles for this scene")

    nodata = settings.nodata if nodata is None else nodata
    jobs = max(1, settings.jobs if jobs is None else jobs)
    out_dir = Path(out_dir)

    LOGGER.info(f"Tiling {scene.width}x{scene.height} scene into {len(tiles)} tiles at zoom {zoom}")

    job = {
        "scene": scene,
        "samples": samples,
        "out_dir": out_dir,
        "nodata": nodata,
        "write_raw": write_raw,
        "bands": tuple(bands),
        "limits": _display_limits(samples, scene, stretch),
    }

    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise TileWriteError(f"Cannot create output directory {out_dir}: {e}")

    if jobs == 1:
        _init_job(job)
        records = [_write_tile(tile) for tile in tiles]
    else:
        with mp.Pool(processes=jobs, initializer=_init_job, initargs=(job,)) as pool:
            records = pool.map(_write_tile, tiles)

    manifest = TileManifest([TileRecord.model_validate(r) for r in records], root=out_dir)
    try:
        manifest.write(out_dir / MANIFEST_NAME)
    except OSError as e:
        raise TileWriteError(f"Failed to write tile manifest: {e}")

    return manifest


def read_tile_samples(record: TileRecord, root: Path, scene: SceneDescriptor) -> np.ndarray:
    """Reads a tile's raw payload with shape (bands, 512, 512)"""
    if record.raw is None:
        raise RasterReadError(f"Tile {record.tile_id} has no raw payload")
    samples = np.fromfile(Path(root) / record.raw, dtype=scene.numpy_dtype)
    return samples.reshape(scene.band_count, TILE_SIZE, TILE_SIZE)
