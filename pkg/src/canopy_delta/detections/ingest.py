import multiprocessing as mp

from dataclasses import dataclass, field

from canopy_delta.config import settings
from canopy_delta.detections.assemble import DEFAULT_DEDUPE_IOU, assemble_scene
from canopy_delta.detections.georeference import georeference
from canopy_delta.detections.models import Detection, TreeInstance
from canopy_delta.detections.parse import DetectionResults
from canopy_delta.exceptions import ConfigurationError, DegeneratePolygonError, RejectedRecord
from canopy_delta.log import LOGGER
from canopy_delta.raster import crs
from canopy_delta.raster.tiler import TileManifest, TileRecord


@dataclass
class IngestReport:
    """Scene-level instances of one epoch plus the counts they were assembled from"""

    epoch: str
    instances: list[TreeInstance] = field(default_factory=list)
    per_tile_counts: dict[str, int] = field(default_factory=dict)
    rejected: list[RejectedRecord] = field(default_factory=list)

    @property
    def tile_count_sum(self) -> int:
        """Tree count as the plain sum of per-tile detections (trees on seams counted twice)"""
        return sum(self.per_tile_counts.values())

    @property
    def scene_count(self) -> int:
        """Tree count after cross-tile deduplication"""
        return len(self.instances)


def _georeference_tile(args) -> tuple[list[TreeInstance], list[tuple[int, str]]]:
    record, detections, epoch, projected_epsg = args
    instances, failures = [], []
    for i, d in detections:
        try:
            instances.append(
                georeference(
                    d,
                    record,
                    epoch=epoch,
                    instance_id=f"{epoch}/{record.tile_id}/{i}",
                    projected_epsg=projected_epsg,
                )
            )
        except DegeneratePolygonError as e:
            failures.append((i, str(e)))
    return instances, failures


def ingest_detections(
    results: DetectionResults | list[Detection],
    manifest: TileManifest,
    epoch: str = None,
    dedupe_iou: float = DEFAULT_DEDUPE_IOU,
    projected_epsg: int = None,
    jobs: int = None,
) -> IngestReport:
    """
    Georeferences detections through a tile manifest and assembles them into one deduplicated
    scene.

    `epoch` defaults to the epoch tag of the tile manifest.

    Each detection's id is `"{epoch}/{z}/{x}/{y}/{index in results file}"`. Tiles are georeferenced in
    parallel when `jobs > 1`; the result does not depend on `jobs`.

    Raises:
        ManifestLookupError: if a detection names a tile missing from the manifest
        ConfigurationError: if no epoch is given and the manifest is empty
    """
    detections = list(results)
    rejected = list(getattr(results, "rejected", []))

    grouped: dict[str, list[tuple[int, Detection]]] = {}
    for i, d in enumerate(detections):
        grouped.setdefault(d.tile, []).append((i, d))

    records: list[TileRecord] = [manifest.get(tile_id) for tile_id in sorted(grouped)]
    if epoch is None:
        tagged = records or manifest.records
        if not tagged:
            raise ConfigurationError("No epoch given and the tile manifest is empty")
        epoch = tagged[0].epoch

    if projected_epsg is None and records:
        # one metric CRS for the whole scene
        first = records[0]
        west, south, east, north = first.bounds
        projected_epsg = crs.metric_epsg_for(first.scene_epsg, (west + east) / 2, (south + north) / 2)

    work = [(r, grouped[r.tile_id], epoch, projected_epsg) for r in records]
    jobs = jobs or settings.jobs
    if jobs > 1 and len(work) > 1:
        with mp.Pool(jobs) as pool:
            per_tile = pool.map(_georeference_tile, work)
    else:
        per_tile = [_georeference_tile(w) for w in work]

    instances = []
    counts = {}
    for record, (tile_instances, failures) in zip(records, per_tile):
        counts[record.tile_id] = len(tile_instances)
        instances.extend(tile_instances)
        rejected.extend(RejectedRecord(i, reason) for i, reason in failures)

    assembled = assemble_scene(instances, dedupe_iou=dedupe_iou)
    LOGGER.info(
        f"epoch {epoch}: {len(instances)} detections on {len(counts)} tiles, "
        f"{len(assembled)} trees after deduplication"
    )

    return IngestReport(
        epoch=epoch,
        instances=assembled,
        per_tile_counts=counts,
        rejected=rejected,
    )
