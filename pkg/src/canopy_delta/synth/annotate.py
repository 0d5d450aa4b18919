from pathlib import Path

import numpy as np
from shapely.geometry import Polygon, box

from canopy_delta.annotations.labelme import annotation_document, write_annotation_file
from canopy_delta.annotations.rasterize import rasterize
from canopy_delta.geometry import dedupe_vertices, is_simple, open_ring
from canopy_delta.log import LOGGER
from canopy_delta.metrics.evaluate import tile_image_id
from canopy_delta.raster import crs
from canopy_delta.raster.tiler import TileManifest, TileRecord
from canopy_delta.raster.tiles import TILE_SIZE
from canopy_delta.synth.ledger import TruthLedger

MIN_PIECE_PX = 8
"""Crown pieces covering fewer tile pixel centres than this are dropped"""


def outline_pieces(
    outline: list[tuple[float, float]],
    epsg: int,
    manifest: TileManifest,
    min_piece_px: int = MIN_PIECE_PX,
) -> list[tuple[TileRecord, list[tuple[float, float]]]]:
    """
    Cuts a ground outline (in `epsg`) into per-tile polygons in tile pixels.

    Returns:
        (tile record, vertices) pairs in manifest order
    """
    xs, ys = zip(*outline)
    mx, my = crs.transform(np.asarray(xs), np.asarray(ys), epsg, crs.WEB_MERCATOR)
    frame = box(0, 0, TILE_SIZE, TILE_SIZE)

    pieces = []
    for record in manifest:
        cols, rows = record.transform.geo_to_pixel(np.asarray(mx), np.asarray(my))
        if cols.max() <= 0 or rows.max() <= 0 or cols.min() >= TILE_SIZE or rows.min() >= TILE_SIZE:
            continue

        clipped = Polygon(zip(cols.tolist(), rows.tolist())).intersection(frame)
        for part in getattr(clipped, "geoms", [clipped]):
            if part.geom_type != "Polygon" or part.is_empty:
                continue
            vertices = dedupe_vertices(
                (min(max(x, 0.0), TILE_SIZE), min(max(y, 0.0), TILE_SIZE))
                for x, y in open_ring(part.exterior.coords)
            )
            if len(vertices) < 3 or not is_simple(vertices):
                continue
            if rasterize(vertices, TILE_SIZE, TILE_SIZE).sum() < min_piece_px:
                continue
            pieces.append((record, vertices))

    return pieces


def annotate_tiles(
    ledger: TruthLedger,
    manifest: TileManifest,
    epoch: str,
    out_dir: Path | str,
    min_piece_px: int = MIN_PIECE_PX,
) -> list[Path]:
    """
    Writes one polygon annotation document per tile from the truth ledger.

    Each crown present in `epoch` is cut along tile edges; every piece becomes one `tree` polygon
    on its tile. Files are named after the tile's image id (`18_187421_113902.json`) and written
    for every tile of the manifest, including tiles without trees.
    """
    out_dir = Path(out_dir)
    shapes: dict[str, list] = {record.tile_id: [] for record in manifest}
    for tree in ledger.present(epoch):
        for record, vertices in outline_pieces(tree.outline(epoch), ledger.epsg, manifest, min_piece_px):
            shapes[record.tile_id].append(("tree", vertices))

    paths = []
    for tile_id, polygons in shapes.items():
        image_id = tile_image_id(tile_id)
        document = annotation_document(f"{image_id}.png", TILE_SIZE, TILE_SIZE, polygons)
        paths.append(write_annotation_file(out_dir / f"{image_id}.json", document))

    LOGGER.info(
        f"Annotated {sum(len(s) for s in shapes.values())} crown pieces on {len(paths)} tiles ({epoch})"
    )
    return paths
