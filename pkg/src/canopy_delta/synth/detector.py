from dataclasses import dataclass, field

import numpy as np

from canopy_delta.detections.models import Detection
from canopy_delta.geometry import bbox
from canopy_delta.raster.tiler import TileManifest
from canopy_delta.synth.annotate import MIN_PIECE_PX, outline_pieces
from canopy_delta.synth.ledger import OUTLINE_VERTICES, TruthLedger, circle_outline
from canopy_delta.synth.spec import DETECTOR_STREAM, DetectorNoise

MIN_RADIUS_FRACTION = 0.25


@dataclass
class SimulatedDetections:
    detections: list[Detection] = field(default_factory=list)
    emitted: list[str] = field(default_factory=list)
    """Ids of the ledger trees that produced at least one detection"""

    false_positives: int = 0


def _noisy_outline(center, radius: float, radial_px: np.ndarray, noise: DetectorNoise, gsd: float):
    radii = radius + radial_px * noise.boundary_noise_px * gsd
    return circle_outline(center, np.maximum(radii, MIN_RADIUS_FRACTION * radius))


def simulate_detector(
    ledger: TruthLedger,
    manifest: TileManifest,
    epoch: str,
    noise: DetectorNoise = None,
    min_piece_px: int = MIN_PIECE_PX,
) -> SimulatedDetections:
    """
    Plays the part of a trained segmentation model on the tiles of one epoch.

    Every true crown is missed with probability `miss_rate`; otherwise its outline (with radial
    boundary noise) is cut into tile pieces exactly like the annotations, and every piece becomes
    one detection with the crown's score. A Binomial(trees, `false_positive_rate`) number of
    crowns that do not exist is added on top.

    Random draws come from stream 10 + epoch index in a fixed order: per true tree (by id) one
    miss draw, one score and the radial noise vector, then the false-positive count and per false
    positive its radius, centre, score and radial noise.

    Args:
        noise: Detector error model. Defaults to the one in the ledger's spec.

    Returns:
        Detections in manifest tile order
    """
    noise = noise or ledger.spec.detector
    rng = np.random.default_rng([ledger.spec.seed, DETECTOR_STREAM + ledger.epoch_index(epoch)])
    gsd = ledger.spec.gsd_m

    by_tile = {record.tile_id: [] for record in manifest}
    result = SimulatedDetections()

    def emit(outline, score: float) -> bool:
        pieces = outline_pieces(outline, ledger.epsg, manifest, min_piece_px)
        for record, vertices in pieces:
            min_x, min_y, max_x, max_y = bbox(vertices)
            by_tile[record.tile_id].append(
                Detection(
                    tile=record.tile_id,
                    score=score,
                    bbox=(min_x, min_y, max_x - min_x, max_y - min_y),
                    polygon=vertices,
                )
            )
        return bool(pieces)

    trees = ledger.present(epoch)
    for tree in trees:
        missed = rng.random() < noise.miss_rate
        score = float(rng.beta(noise.score_alpha, noise.score_beta))
        radial = rng.standard_normal(OUTLINE_VERTICES)
        if missed:
            continue
        outline = _noisy_outline(tree.centers[epoch], tree.radius_m, radial, noise, gsd)
        if emit(outline, score):
            result.emitted.append(tree.id)

    origin_x, _, _, origin_y, _, _ = ledger.geotransform
    max_x = origin_x + ledger.width * gsd
    min_y = origin_y - ledger.height * gsd
    low, high = noise.false_positive_radius_m

    result.false_positives = int(rng.binomial(len(trees), noise.false_positive_rate))
    for _ in range(result.false_positives):
        radius = float(rng.uniform(low, high))
        center = (
            float(rng.uniform(origin_x + radius, max_x - radius)),
            float(rng.uniform(min_y + radius, origin_y - radius)),
        )
        score = float(rng.beta(noise.score_alpha, noise.score_beta))
        radial = rng.standard_normal(OUTLINE_VERTICES)
        emit(_noisy_outline(center, radius, radial, noise, gsd), score)

    result.detections = [d for tile_id in by_tile for d in by_tile[tile_id]]
    return result
