# ruff: noqa: F401,F403

from .spec import DetectorNoise, EditPlan, SynthSpec
from .ledger import LedgerTree, TruthLedger, circle_outline, ledger_instances
from .generate import LEDGER_NAME, SynthOutput, generate_scene, scene_grid
from .annotate import MIN_PIECE_PX, annotate_tiles, outline_pieces
from .detector import SimulatedDetections, simulate_detector
