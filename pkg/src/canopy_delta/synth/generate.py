"""
Synthetic bi-temporal scenes with known ground truth.

Trees are disks drawn brighter than a smoothed noise background in all four bands. Crown edges
are dithered: a pixel cut by the crown boundary becomes tree with a probability equal to the
fraction of it the disk covers.
"""

import math

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from canopy_delta.annotations.labelme import annotation_document, write_annotation_file
from canopy_delta.annotations.rasterize import rasterize
from canopy_delta.exceptions import SynthesisError
from canopy_delta.log import LOGGER
from canopy_delta.profile import profile
from canopy_delta.raster import crs
from canopy_delta.raster.scene import SceneDescriptor, write_scene
from canopy_delta.synth.ledger import LedgerTree, TruthLedger
from canopy_delta.synth.spec import (
    DITHER_STREAM,
    EDIT_STREAM,
    LAYOUT_STREAM,
    TEXTURE_STREAM,
    SynthSpec,
)

BANDS = 4

BACKGROUND_LEVELS = (1400.0, 1300.0, 1200.0, 1800.0)
TREE_LEVELS = (2600.0, 2800.0, 2400.0, 5200.0)
TEXTURE_AMPLITUDE = 150.0
TEXTURE_SIGMA_PX = 3.0

PLACEMENT_ATTEMPTS = 1000
"""Rejection-sampling draws per tree before the layout is declared infeasible"""

JITTER_CUTOFF = 3.0

LEDGER_NAME = "ledger.json"


@dataclass
class SynthOutput:
    """Files written by `generate_scene`"""

    ledger: TruthLedger
    root: Path
    scenes: dict[str, Path] = field(default_factory=dict)
    """Scene stem (raw + sidecar) per epoch"""

    annotations: dict[str, Path] = field(default_factory=dict)
    """Scene-level annotation document per epoch"""

    @property
    def ledger_path(self) -> Path:
        return self.root / LEDGER_NAME


def scene_grid(spec: SynthSpec) -> tuple[tuple[float, ...], int, int]:
    """
    Pixel grid covering the spec's extent in the scene CRS, aligned to multiples of the GSD.

    Returns:
        (GDAL geotransform, width, height)
    """
    west, south, east, north = spec.extent
    xs, ys = crs.transform(
        [west, east, east, west], [south, south, north, north], crs.WGS84, spec.scene_epsg
    )
    gsd = spec.gsd_m
    origin_x = math.floor(min(xs) / gsd) * gsd
    origin_y = math.ceil(max(ys) / gsd) * gsd
    width = math.ceil((max(xs) - origin_x) / gsd)
    height = math.ceil((origin_y - min(ys)) / gsd)
    return (origin_x, gsd, 0.0, origin_y, 0.0, -gsd), width, height


def _rng(spec: SynthSpec, stream: int) -> np.random.Generator:
    return np.random.default_rng([spec.seed, stream])


def _place(
    rng: np.random.Generator,
    count: int,
    spec: SynthSpec,
    bounds: tuple[float, float, float, float],
    occupied: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Draws `count` crowns one at a time, keeping `min_spacing_m` to every earlier centre"""
    min_x, min_y, max_x, max_y = bounds
    low, high = spec.crown_radius_m
    if count and (max_x - min_x <= 2 * high or max_y - min_y <= 2 * high):
        raise SynthesisError(f"Extent is too small for crowns of radius {high} m")
    centers = [occupied.reshape(-1, 2)]
    placed, radii = [], []

    for i in range(count):
        for _ in range(PLACEMENT_ATTEMPTS):
            r = rng.uniform(low, high)
            x = rng.uniform(min_x + high, max_x - high)
            y = rng.uniform(min_y + high, max_y - high)
            taken = np.concatenate(centers + [np.array(placed).reshape(-1, 2)])
            if taken.size == 0 or np.hypot(taken[:, 0] - x, taken[:, 1] - y).min() >= spec.min_spacing_m:
                placed.append((x, y))
                radii.append(r)
                break
        else:
            raise SynthesisError(
                f"Could not place tree {i + 1} of {count}: the extent cannot hold the requested "
                f"tree count with {spec.min_spacing_m} m spacing"
            )

    return np.array(placed, dtype=np.float64).reshape(-1, 2), np.array(radii, dtype=np.float64)


def _jitter(rng: np.random.Generator, count: int, sigma: float) -> np.ndarray:
    offsets = rng.normal(0.0, sigma, size=(count, 2))
    norms = np.hypot(offsets[:, 0], offsets[:, 1])
    limit = JITTER_CUTOFF * sigma
    scale = np.where(norms > limit, limit / np.where(norms > 0, norms, 1.0), 1.0)
    return offsets * scale[:, None]


def _layout(spec: SynthSpec, bounds) -> list[dict]:
    """Tree centres, radii and fates of both epochs"""
    earlier, later = spec.epoch_tags
    centers, radii = _place(_rng(spec, LAYOUT_STREAM), spec.tree_count, spec, bounds, np.empty((0, 2)))

    edit_rng = _rng(spec, EDIT_STREAM)
    n = spec.tree_count
    removed = set(edit_rng.choice(n, size=round(spec.edits.removed * n), replace=False).tolist())
    survivors = [i for i in range(n) if i not in removed]
    jittered = edit_rng.choice(
        len(survivors), size=round(spec.edits.jittered * len(survivors)), replace=False
    )
    moved = centers.copy()
    if len(jittered):
        idx = np.array(survivors)[np.sort(jittered)]
        moved[idx] += _jitter(edit_rng, len(idx), spec.edits.jitter_sigma_m)
        high = spec.crown_radius_m[1]
        moved[:, 0] = np.clip(moved[:, 0], bounds[0] + high, bounds[2] - high)
        moved[:, 1] = np.clip(moved[:, 1], bounds[1] + high, bounds[3] - high)

    occupied = np.concatenate([centers, moved])
    added_centers, added_radii = _place(
        edit_rng, round(spec.edits.added * n), spec, bounds, occupied
    )

    trees = []
    for i in range(n):
        entry = {"radius": float(radii[i]), "centers": {earlier: tuple(centers[i])}}
        if i in removed:
            entry["fate"] = "removed"
        else:
            entry["fate"] = "persisted"
            entry["centers"][later] = tuple(moved[i])
        trees.append(entry)
    for c, r in zip(added_centers, added_radii):
        trees.append({"radius": float(r), "centers": {later: tuple(c)}, "fate": "added"})
    return trees


def _background(spec: SynthSpec, width: int, height: int) -> np.ndarray:
    noise = _rng(spec, TEXTURE_STREAM).standard_normal((BANDS, height, width))
    smooth = gaussian_filter(noise, sigma=(0, TEXTURE_SIGMA_PX, TEXTURE_SIGMA_PX))
    smooth /= max(float(smooth.std()), 1e-12)
    levels = np.asarray(BACKGROUND_LEVELS)[:, None, None]
    return levels + TEXTURE_AMPLITUDE * smooth


def _coverage(center_px, radius_px: float, width: int, height: int):
    """Approximate fraction of each pixel inside a disk, over the disk's pixel window"""
    cx, cy = center_px
    col0 = max(0, math.floor(cx - radius_px - 1))
    col1 = min(width, math.ceil(cx + radius_px + 1))
    row0 = max(0, math.floor(cy - radius_px - 1))
    row1 = min(height, math.ceil(cy + radius_px + 1))
    cols = np.arange(col0, col1) + 0.5
    rows = np.arange(row0, row1) + 0.5
    distance = np.hypot(cols[None, :] - cx, rows[:, None] - cy)
    return (slice(row0, row1), slice(col0, col1)), np.clip(radius_px - distance + 0.5, 0.0, 1.0)


def render_epoch(
    spec: SynthSpec,
    trees: list[LedgerTree],
    epoch: str,
    geotransform,
    width: int,
    height: int,
    background: np.ndarray,
) -> np.ndarray:
    """Renders one epoch as 16-bit samples with shape (4, height, width)"""
    epoch_index = spec.epoch_tags.index(epoch)
    rng = _rng(spec, DITHER_STREAM + epoch_index)
    canopy = np.zeros((height, width), dtype=bool)

    origin_x, gsd, _, origin_y, _, _ = geotransform
    for tree in trees:
        if not tree.present_in(epoch):
            continue
        x, y = tree.centers[epoch]
        window, coverage = _coverage(
            ((x - origin_x) / gsd, (origin_y - y) / gsd), tree.radius_m / gsd, width, height
        )
        canopy[window] |= coverage > rng.random(coverage.shape)

    texture = background - np.asarray(BACKGROUND_LEVELS)[:, None, None]
    crowns = np.asarray(TREE_LEVELS)[:, None, None] + 0.5 * texture
    samples = np.where(canopy[None, :, :], crowns, background)
    return np.clip(np.rint(samples), 0, 65535).astype(np.uint16)


def _pixel_outline(tree: LedgerTree, epoch: str, geotransform) -> list[tuple[float, float]]:
    origin_x, gsd, _, origin_y, _, _ = geotransform
    return [((x - origin_x) / gsd, (origin_y - y) / gsd) for x, y in tree.outline(epoch)]


def _pixel_area(outline: list[tuple[float, float]], gsd: float) -> float:
    xs, ys = zip(*outline)
    col0, row0 = math.floor(min(xs)), math.floor(min(ys))
    local = [(x - col0, y - row0) for x, y in outline]
    grid = rasterize(local, math.ceil(max(xs)) - col0 + 1, math.ceil(max(ys)) - row0 + 1)
    return float(grid.sum()) * gsd * gsd


@profile
def generate_scene(spec: SynthSpec, out_dir: Path | str) -> SynthOutput:
    """
    Generates a synthetic scene pair and its ground truth.

    Writes into `out_dir`:

    - `scenes/scene_<epoch>.raw` + `.scene.json` for both epochs (4 bands, u16)
    - `annotations/scene_<epoch>.json`, one polygon per tree in scene pixels
    - `ledger.json`, the truth ledger (tree centres, radii, fates and pixel areas)

    Identical specs produce byte-identical files.

    Raises:
        SynthesisError: if the extent cannot hold the trees at the requested spacing
    """
    out_dir = Path(out_dir)
    geotransform, width, height = scene_grid(spec)
    origin_x, gsd, _, origin_y, _, _ = geotransform
    bounds = (origin_x, origin_y - height * gsd, origin_x + width * gsd, origin_y)
    epsg = spec.scene_epsg

    LOGGER.info(f"Synthesizing {width}x{height} scene pair with {spec.tree_count} trees (EPSG:{epsg})")

    trees = []
    for i, entry in enumerate(_layout(spec, bounds)):
        tree = LedgerTree(
            id=f"tree-{i + 1:04d}",
            fate=entry["fate"],
            radius_m=entry["radius"],
            centers={e: (float(c[0]), float(c[1])) for e, c in entry["centers"].items()},
            areas_m2={},
        )
        areas = {e: _pixel_area(_pixel_outline(tree, e, geotransform), gsd) for e in tree.centers}
        trees.append(tree.model_copy(update={"areas_m2": areas}))

    ledger = TruthLedger(
        spec=spec, epsg=epsg, geotransform=geotransform, width=width, height=height, trees=trees
    )
    output = SynthOutput(ledger=ledger, root=out_dir)
    background = _background(spec, width, height)

    for epoch_date, epoch in zip(spec.epochs, spec.epoch_tags):
        stem = out_dir / "scenes" / f"scene_{epoch}"
        scene = SceneDescriptor(
            width=width,
            height=height,
            bands=BANDS,
            dtype="u16",
            geotransform=geotransform,
            epsg=epsg,
            date=epoch_date,
            gsd_m=gsd,
        )
        samples = render_epoch(spec, trees, epoch, geotransform, width, height, background)
        write_scene(stem, scene, samples)
        output.scenes[epoch] = stem

        document = annotation_document(
            f"scene_{epoch}.png",
            width,
            height,
            [("tree", _pixel_outline(t, epoch, geotransform)) for t in ledger.present(epoch)],
        )
        output.annotations[epoch] = write_annotation_file(
            out_dir / "annotations" / f"scene_{epoch}.json", document
        )

    ledger.write(output.ledger_path)
    return output
