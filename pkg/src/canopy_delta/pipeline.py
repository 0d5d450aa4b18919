"""
Stage runner shared by the command line subcommands.

Every run writes into `<out>/.staging/` first. When the run succeeds its files are moved into
`<out>` next to `run.json` (command, version, parameters and sha256 of every input and output)
and `run.timings.json` (wall-clock times, kept apart so `run.json` is reproducible). When it
fails the staging directory is renamed to `<out>/.failed/` and nothing else in `<out>` changes.

Commands whose output is a single file (`ingest --out instances_2018.geojson`) run in the file's
parent directory with the manifest named after it: `instances_2018.run.json` and
`instances_2018.run.timings.json`.
"""

import contextlib
import hashlib
import json
import shutil
import time

from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Literal, Sequence

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from canopy_delta import __version__
from canopy_delta.annotations.labelme import load_annotation_dir
from canopy_delta.annotations.split import DEFAULT_RATIOS, split_dataset
from canopy_delta.change.matching import DEFAULT_MAX_DIST, DEFAULT_MIN_IOU, match_epochs, summarize
from canopy_delta.change.outputs import write_change_outputs
from canopy_delta.change.regions import read_regions, region_report
from canopy_delta.config import settings
from canopy_delta.detections.assemble import DEFAULT_DEDUPE_IOU
from canopy_delta.detections.geojson import write_instances
from canopy_delta.detections.ingest import IngestReport, ingest_detections
from canopy_delta.detections.parse import parse_detections, write_detections
from canopy_delta.exceptions import ConfigurationError
from canopy_delta.log import LOGGER
from canopy_delta.profile import timer
from canopy_delta.metrics.evaluate import (
    DEFAULT_SCORE_CUTOFF,
    evaluate,
    ground_truth_from_annotations,
    parse_thresholds,
    predictions_from_detections,
    write_pr_curves,
)
from canopy_delta.raster.scene import read_scene, scene_paths
from canopy_delta.raster.tiler import TileManifest, tile_scene
from canopy_delta.synth.annotate import annotate_tiles
from canopy_delta.synth.detector import simulate_detector
from canopy_delta.synth.generate import generate_scene
from canopy_delta.synth.ledger import TruthLedger
from canopy_delta.synth.spec import SynthSpec
from canopy_delta.training.config import TrainConfig

STAGING_DIR = ".staging"
FAILED_DIR = ".failed"

DEFAULT_ZOOM = 18


def sha256_file(path: Path | str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _files(path: Path) -> list[Path]:
    if path.is_dir():
        return sorted(p for p in path.rglob("*") if p.is_file())
    return [path]


class Run:
    """
    Staged output directory of one subcommand.

    Usage:

    ```python
    with Run("tile", out_dir, parameters={"zoom": 18}, inputs=[scene_raw, scene_sidecar]) as run:
        with run.stage("tile"):
            tile_scene(scene, samples, 18, run.staging)
    ```

    `manifest` names the manifest pair written on success (`<manifest>.json` and
    `<manifest>.timings.json`).
    """

    def __init__(
        self,
        command: str,
        out_dir: Path | str,
        parameters: dict = None,
        inputs: Sequence[Path | str] = (),
        jobs: int = None,
        manifest: str = "run",
    ):
        self.command = command
        self.out_dir = Path(out_dir)
        self.manifest_path = self.out_dir / f"{manifest}.json"
        self.timings_path = self.out_dir / f"{manifest}.timings.json"
        self.parameters = parameters or {}
        self.inputs = [Path(p) for p in inputs]
        self.jobs = jobs
        self.staging = self.out_dir / STAGING_DIR
        self.timings: dict[str, float] = {}
        self._started = None

    def __enter__(self) -> "Run":
        missing = [str(p) for p in self.inputs if not p.exists()]
        if missing:
            raise ConfigurationError(f"Input not found: {', '.join(missing)}")

        self._started = time.perf_counter()
        self.out_dir.mkdir(parents=True, exist_ok=True)
        if self.staging.exists():
            shutil.rmtree(self.staging)
        self.staging.mkdir()
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self._commit()
        else:
            self._quarantine()
        return False

    @contextlib.contextmanager
    def stage(self, name: str):
        with timer(f"{self.command}/{name}") as timing:
            yield
        self.timings[name] = timing.seconds

    def _input_records(self) -> list[dict]:
        return [{"path": str(p), "sha256": sha256_file(p)} for path in self.inputs for p in _files(path)]

    def _commit(self):
        outputs = [
            {"path": p.relative_to(self.staging).as_posix(), "sha256": sha256_file(p)}
            for p in _files(self.staging)
        ]
        for entry in sorted(self.staging.iterdir()):
            target = self.out_dir / entry.name
            if target.is_dir():
                shutil.rmtree(target)
            elif target.exists():
                target.unlink()
            entry.rename(target)
        self.staging.rmdir()

        manifest = {
            "command": self.command,
            "version": __version__,
            "parameters": self.parameters,
            "inputs": self._input_records(),
            "outputs": outputs,
        }
        self.manifest_path.write_text(json.dumps(manifest, indent=2, default=str) + "\n")

        timings = {
            "finished": datetime.now(timezone.utc).isoformat(),
            "total_sec": round(time.perf_counter() - self._started, 4),
            "jobs": self.jobs,
            "stages": self.timings,
        }
        self.timings_path.write_text(json.dumps(timings, indent=2) + "\n")

    def _quarantine(self):
        failed = self.out_dir / FAILED_DIR
        if failed.exists():
            shutil.rmtree(failed)
        if self.staging.exists():
            self.staging.rename(failed)
            LOGGER.warning(f"{self.command} failed, partial outputs moved to {failed}")


def write_ingest_outputs(report: IngestReport, out_dir: Path | str, name: str = "instances") -> list[Path]:
    """Writes `<name>.geojson` and `<name>.ingest.json` (counts and rejected records)"""
    out_dir = Path(out_dir)
    geojson = write_instances(report.instances, out_dir / f"{name}.geojson")
    summary = out_dir / f"{name}.ingest.json"
    summary.write_text(
        json.dumps(
            {
                "epoch": report.epoch,
                "scene_count": report.scene_count,
                "tile_count_sum": report.tile_count_sum,
                "per_tile_counts": report.per_tile_counts,
                "rejected": [str(r) for r in report.rejected],
            },
            indent=2,
        )
        + "\n"
    )
    return [geojson, summary]


@dataclass
class Fixture:
    """A synthetic scene pair tiled, labelled and run through the simulated detector"""

    ledger: TruthLedger
    tiles: dict[str, Path] = field(default_factory=dict)
    labels: dict[str, Path] = field(default_factory=dict)
    detections: dict[str, Path] = field(default_factory=dict)


def build_fixture(
    spec: SynthSpec,
    out_dir: Path | str,
    zoom: int = DEFAULT_ZOOM,
    jobs: int = None,
) -> Fixture:
    """
    Generates a synthetic scene pair and everything downstream stages consume from it.

    Layout of `out_dir`: `scenes/`, `annotations/` and `ledger.json` from `generate_scene`, then
    per epoch `tiles/<epoch>/` (tile pyramid and manifest), `labels/<epoch>/` (tile annotation
    documents) and `detections/<epoch>.json` (simulated detector output).
    """
    out_dir = Path(out_dir)
    output = generate_scene(spec, out_dir)
    fixture = Fixture(ledger=output.ledger)

    for epoch in spec.epoch_tags:
        scene, samples = read_scene(output.scenes[epoch])
        tiles_dir = out_dir / "tiles" / epoch
        manifest = tile_scene(scene, samples, zoom, tiles_dir, jobs=jobs)
        fixture.tiles[epoch] = tiles_dir

        fixture.labels[epoch] = out_dir / "labels" / epoch
        annotate_tiles(output.ledger, manifest, epoch, fixture.labels[epoch])

        simulated = simulate_detector(output.ledger, manifest, epoch)
        fixture.detections[epoch] = write_detections(
            simulated.detections, out_dir / "detections" / f"{epoch}.json"
        )

    return fixture


class TileSettings(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    stretch: tuple[float, float] | None = (2, 98)
    bands: tuple[int, ...] = (1, 2, 3)
    """One-based band numbers shown in the PNG tiles"""


class SplitSettings(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    seed: int = 0
    ratios: tuple[float, float, float] = DEFAULT_RATIOS


class EvalSettings(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    iou: str = "0.5:0.95"
    interpolation: Literal["101", "all"] = "101"
    score_cutoff: float = Field(default=DEFAULT_SCORE_CUTOFF, ge=0, le=1)
    subset: Literal["all", "train", "val", "test"] = "all"
    """Split subset the evaluation runs on"""


class ChangeSettings(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    max_dist: float = Field(default=DEFAULT_MAX_DIST, gt=0)
    strategy: Literal["greedy", "optimal"] = "greedy"
    criterion: Literal["distance", "iou"] = "distance"
    min_iou: float = Field(default=DEFAULT_MIN_IOU, gt=0, le=1)
    dedupe_iou: float = Field(default=DEFAULT_DEDUPE_IOU, gt=0, le=1)


# CLI flag -> config key path
OVERRIDES = {
    "out": ("out",),
    "zoom": ("zoom",),
    "seed": ("split", "seed"),
    "iou": ("eval", "iou"),
    "max_dist": ("change", "max_dist"),
    "strategy": ("change", "strategy"),
}


class PipelineConfig(BaseModel):
    """
    Configuration of a full pipeline run, loaded from YAML.

    Either a `synth` block generates the scenes, annotations and detections, or `scenes`,
    `annotations` and `detections` name them per epoch (two epochs, keyed by date tag). Relative
    paths are resolved against the config file's directory.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    out: Path = Path("report")
    zoom: int = DEFAULT_ZOOM
    synth: SynthSpec | None = None
    scenes: dict[str, Path] = {}
    annotations: dict[str, Path] = {}
    """Directory of tile annotation documents per epoch"""

    detections: dict[str, Path] = {}
    """Detection results file per epoch"""

    regions: Path | None = None
    tile: TileSettings = TileSettings()
    split: SplitSettings = SplitSettings()
    eval: EvalSettings = EvalSettings()
    change: ChangeSettings = ChangeSettings()
    train: TrainConfig = TrainConfig()

    @model_validator(mode="after")
    def _check_inputs(self):
        parse_thresholds(self.eval.iou)
        if self.synth is not None:
            if self.scenes or self.annotations or self.detections:
                raise ValueError("a synth block cannot be combined with scenes, annotations or detections")
            return self

        epochs = sorted(self.scenes)
        if len(epochs) != 2:
            raise ValueError("scenes must name exactly two epochs")
        for name in ("annotations", "detections"):
            if sorted(getattr(self, name)) != epochs:
                raise ValueError(f"{name} must name the same epochs as scenes: {epochs}")
        return self

    @property
    def epochs(self) -> tuple[str, str]:
        if self.synth is not None:
            return self.synth.epoch_tags
        return tuple(sorted(self.scenes))

    def input_paths(self) -> list[Path]:
        paths = []
        for epoch in sorted(self.scenes):
            paths.extend(scene_paths(self.scenes[epoch]))
        paths.extend(self.annotations[e] for e in sorted(self.annotations))
        paths.extend(self.detections[e] for e in sorted(self.detections))
        if self.regions is not None:
            paths.append(self.regions)
        return paths

    def check_paths(self) -> None:
        missing = [str(p) for p in self.input_paths() if not p.exists()]
        if missing:
            raise ConfigurationError(f"Config references missing paths: {', '.join(missing)}")

    def with_overrides(self, **flags) -> "PipelineConfig":
        """Applies command line flags on top of the config (flags set to None are ignored)"""
        document = self.model_dump()
        for flag, value in flags.items():
            if value is None:
                continue
            *parents, key = OVERRIDES[flag]
            target = document
            for parent in parents:
                target = target[parent]
            target[key] = value
        try:
            return PipelineConfig.model_validate(document)
        except ValidationError as e:
            raise ConfigurationError(f"Invalid pipeline option: {e}")

    @classmethod
    def load(cls, path: Path | str) -> "PipelineConfig":
        path = Path(path)
        try:
            document = yaml.safe_load(path.read_text()) or {}
        except FileNotFoundError:
            raise ConfigurationError(f"Config file not found: {path}")
        except yaml.YAMLError as e:
            raise ConfigurationError(f"Config file {path} is not valid YAML: {e}")

        if not isinstance(document, dict):
            raise ConfigurationError(f"Config file {path} must hold a mapping")

        base = path.parent
        for key in ("scenes", "annotations", "detections"):
            if isinstance(document.get(key), dict):
                document[key] = {str(k): base / v for k, v in document[key].items()}
        for key in ("regions", "out"):
            if document.get(key) is not None:
                document[key] = base / document[key]

        try:
            return cls.model_validate(document)
        except ValidationError as e:
            raise ConfigurationError(f"Invalid config {path}: {e}")


def _prefixed(by_image: dict, epoch: str) -> dict:
    return {f"{epoch}/{image_id}": v for image_id, v in by_image.items()}


def run_pipeline(config: PipelineConfig, run: Run, jobs: int = None) -> dict:
    """
    Runs every stage over a config, writing into `run.staging`.

    Stages: synth (when configured) or tile, split, ingest, eval, change. Returns the headline
    numbers of the run.
    """
    out = run.staging
    jobs = jobs or settings.jobs
    earlier, later = config.epochs
    tiles, labels, detections = {}, {}, {}

    if config.synth is not None:
        with run.stage("synth"):
            fixture = build_fixture(config.synth, out / "fixture", zoom=config.zoom, jobs=jobs)
        tiles, labels, detections = fixture.tiles, fixture.labels, fixture.detections
    else:
        with run.stage("tile"):
            for epoch in config.epochs:
                scene, samples = read_scene(config.scenes[epoch])
                tiles[epoch] = out / "tiles" / epoch
                tile_scene(
                    scene,
                    samples,
                    config.zoom,
                    tiles[epoch],
                    stretch=config.tile.stretch,
                    bands=tuple(b - 1 for b in config.tile.bands),
                    jobs=jobs,
                )
        labels, detections = dict(config.annotations), dict(config.detections)

    with run.stage("split"):
        documents = {e: load_annotation_dir(labels[e]) for e in config.epochs}
        split = split_dataset(
            [f"{e}/{image_id}" for e in config.epochs for image_id in documents[e]],
            ratios=config.split.ratios,
            seed=config.split.seed,
        )
        split.write(out / "split")

    with run.stage("ingest"):
        results = {e: parse_detections(Path(detections[e])) for e in config.epochs}
        reports = {}
        for epoch in config.epochs:
            reports[epoch] = ingest_detections(
                results[epoch],
                TileManifest.read(tiles[epoch]),
                epoch=epoch,
                dedupe_iou=config.change.dedupe_iou,
                jobs=jobs,
            )
            write_ingest_outputs(reports[epoch], out / "instances", name=epoch)

    with run.stage("eval"):
        gt, pred = {}, {}
        for epoch in config.epochs:
            gt.update(_prefixed(ground_truth_from_annotations(documents[epoch]), epoch))
            pred.update(_prefixed(predictions_from_detections(results[epoch]), epoch))
        if config.eval.subset != "all":
            keep = set(getattr(split, config.eval.subset))
            gt = {k: v for k, v in gt.items() if k in keep}
            pred = {k: v for k, v in pred.items() if k in keep}
        evaluation = evaluate(
            gt,
            pred,
            thresholds=parse_thresholds(config.eval.iou),
            interpolation=config.eval.interpolation,
            score_cutoff=config.eval.score_cutoff,
            jobs=jobs,
        )
        evaluation.summary.write(out / "eval" / "summary.json")
        write_pr_curves(evaluation.curves, out / "eval" / "pr_curves.csv")

    with run.stage("change"):
        records = match_epochs(
            reports[earlier].instances,
            reports[later].instances,
            max_dist=config.change.max_dist,
            strategy=config.change.strategy,
            criterion=config.change.criterion,
            min_iou=config.change.min_iou,
        )
        summary = summarize(records, config.change.strategy, config.change.criterion, config.change.max_dist)
        regions = read_regions(config.regions) if config.regions is not None else []
        write_change_outputs(records, region_report(records, regions), summary, out / "change")

    (out / "train.yml").write_text(config.train.to_yaml())

    return {
        "trees": {e: reports[e].scene_count for e in config.epochs},
        "persisted": summary.persisted,
        "lost": summary.lost,
        "gained": summary.gained,
        "mask_map_50_95": evaluation.summary.mask.map_50_95,
        "box_map_50_95": evaluation.summary.box.map_50_95,
    }
