from pathlib import Path

import click

from canopy_delta import __version__
from canopy_delta.annotations.labelme import load_annotation_dir
from canopy_delta.annotations.split import split_dataset
from canopy_delta.change.matching import DEFAULT_MAX_DIST, DEFAULT_MIN_IOU, match_epochs, summarize
from canopy_delta.change.outputs import write_change_outputs
from canopy_delta.change.regions import read_regions, region_report
from canopy_delta.detections.assemble import DEFAULT_DEDUPE_IOU
from canopy_delta.detections.geojson import read_instances
from canopy_delta.detections.ingest import ingest_detections
from canopy_delta.detections.parse import parse_detections
from canopy_delta.exceptions import CanopyDeltaError, ConfigurationError, MathcheckError
from canopy_delta.log import set_level
from canopy_delta.metrics.evaluate import (
    DEFAULT_SCORE_CUTOFF,
    evaluate,
    ground_truth_from_annotations,
    parse_thresholds,
    predictions_from_detections,
    write_pr_curves,
)
from canopy_delta.pipeline import DEFAULT_ZOOM, PipelineConfig, Run, build_fixture, run_pipeline, write_ingest_outputs
from canopy_delta.raster.scene import read_scene, scene_paths
from canopy_delta.raster.tiler import MANIFEST_NAME, TileManifest, tile_scene
from canopy_delta.synth.spec import SynthSpec
from canopy_delta.training.mathcheck import run_mathcheck


class CommandGroup(click.Group):
    """Prints canopy-delta errors as one `error[<category>]: <message>` line and exits with 1"""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except CanopyDeltaError as e:
            message = " ".join(str(e).split())
            click.echo(f"error[{e.category}]: {message}", err=True)
            ctx.exit(1)


def _require(value, flag: str):
    if value is None:
        raise ConfigurationError(f"missing required option {flag}")
    return value


def _output_target(out: Path, suffix: str, name: str) -> tuple[Path, str, str]:
    """
    Resolves `--out` into (directory, output name, manifest name). An `out` ending in `suffix` is a
    file written inside its parent directory; anything else is a directory holding `name`.
    """
    if out.suffix == suffix:
        return out.parent, out.stem, f"{out.stem}.run"
    return out, name, "run"


def _numbers(value: str, flag: str, cast=float) -> tuple:
    try:
        return tuple(cast(v) for v in value.split(","))
    except ValueError:
        raise ConfigurationError(f"{flag} expects comma separated numbers, got {value!r}")


jobs_option = click.option(
    "--jobs",
    type=click.IntRange(min=1),
    envvar="CANOPY_DELTA_JOBS",
    default=None,
    help="Worker processes (env CANOPY_DELTA_JOBS). Results do not depend on it.",
)
out_option = click.option("--out", type=click.Path(path_type=Path), help="Output directory")


@click.group(cls=CommandGroup)
@click.version_option(__version__, prog_name="canopy-delta")
@click.option("--debug", is_flag=True, help="Log debugging information and stage timings")
@click.option("--verbose", "-v", is_flag=True, help="Log progress")
def cli(debug, verbose):
    """Tree canopy change detection from tiled satellite imagery"""
    set_level(debug=debug, verbose=verbose)


@cli.command()
@click.option("--scene", type=click.Path(path_type=Path), help="Scene raw file, sidecar or stem")
@click.option("--zoom", type=int, default=DEFAULT_ZOOM, show_default=True)
@out_option
@click.option("--bands", default="1,2,3", show_default=True, help="One-based bands shown in the PNGs")
@click.option("--stretch", default="2,98", show_default=True, help="Display stretch percentiles")
@click.option("--no-stretch", is_flag=True, help="Map the full sample range instead of stretching")
@click.option("--raw", is_flag=True, help="Also write raw sample payloads")
@click.option("--nodata", type=int, default=None)
@jobs_option
def tile(scene, zoom, out, bands, stretch, no_stretch, raw, nodata, jobs):
    """Cut a scene into 512x512 web-mercator tiles"""
    scene_path = _require(scene, "--scene")
    out = _require(out, "--out")
    band_indices = tuple(b - 1 for b in _numbers(bands, "--bands", int))
    limits = None if no_stretch else _numbers(stretch, "--stretch")

    parameters = {"zoom": zoom, "bands": bands, "stretch": limits, "raw": raw, "nodata": nodata}
    with Run("tile", out, parameters, inputs=scene_paths(scene_path), jobs=jobs) as run:
        with run.stage("tile"):
            descriptor, samples = read_scene(scene_path)
            manifest = tile_scene(
                descriptor,
                samples,
                zoom,
                run.staging,
                stretch=limits,
                bands=band_indices,
                write_raw=raw,
                nodata=nodata,
                jobs=jobs,
            )

    click.echo(f"{len(manifest)} tiles written to {out}")


@cli.command()
@click.option("--annotations", type=click.Path(path_type=Path), help="Directory of annotation documents")
@out_option
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--ratios", default="0.7,0.2,0.1", show_default=True, help="train,val,test ratios")
@jobs_option
def split(annotations, out, seed, ratios, jobs):
    """Split annotated images into train/val/test lists"""
    annotations = _require(annotations, "--annotations")
    out = _require(out, "--out")
    shares = _numbers(ratios, "--ratios")

    with Run("split", out, {"seed": seed, "ratios": shares}, inputs=[annotations], jobs=jobs) as run:
        with run.stage("split"):
            documents = load_annotation_dir(annotations)
            result = split_dataset(list(documents), ratios=shares, seed=seed)
            result.write(run.staging)

    train, val, test = result.sizes
    click.echo(f"train {train}, val {val}, test {test}")


@cli.command()
@click.option("--detections", type=click.Path(path_type=Path), help="Detection results file")
@click.option(
    "--manifest",
    "--tiles",
    "manifest",
    type=click.Path(path_type=Path),
    help="Tile manifest.json, or the tile directory holding it",
)
@click.option("--epoch", default=None, help="Epoch tag of the detections, e.g. 2018-12-07")
@click.option("--out", type=click.Path(path_type=Path), help="Instances GeoJSON file (*.geojson) or output directory")
@click.option("--dedupe-iou", type=float, default=DEFAULT_DEDUPE_IOU, show_default=True)
@jobs_option
def ingest(detections, manifest, epoch, out, dedupe_iou, jobs):
    """Georeference tile detections and merge them into one scene"""
    detections = _require(detections, "--detections")
    manifest = _require(manifest, "--manifest")
    epoch = _require(epoch, "--epoch")
    out = _require(out, "--out")
    manifest_file = manifest / MANIFEST_NAME if manifest.is_dir() else manifest
    out_dir, name, run_manifest = _output_target(out, ".geojson", "instances")

    parameters = {"epoch": epoch, "dedupe_iou": dedupe_iou}
    inputs = [detections, manifest_file]
    with Run("ingest", out_dir, parameters, inputs=inputs, jobs=jobs, manifest=run_manifest) as run:
        with run.stage("ingest"):
            report = ingest_detections(
                parse_detections(detections),
                TileManifest.read(manifest_file),
                epoch=epoch,
                dedupe_iou=dedupe_iou,
                jobs=jobs,
            )
            write_ingest_outputs(report, run.staging, name=name)

    click.echo(
        f"epoch {report.epoch}: {report.scene_count} trees "
        f"({report.tile_count_sum} tile detections, {len(report.rejected)} rejected)"
    )


@cli.command("eval")
@click.option("--gt", type=click.Path(path_type=Path), help="Directory of ground-truth annotation documents")
@click.option("--pred", type=click.Path(path_type=Path), help="Detection results file")
@click.option("--out", type=click.Path(path_type=Path), help="Summary JSON file (*.json) or output directory")
@click.option("--iou", default="0.5:0.95", show_default=True, help="IoU thresholds: 0.5:0.95, 0.5 or 0.5,0.75")
@click.option("--interp", type=click.Choice(["101", "all"]), default="101", show_default=True)
@click.option("--score-cutoff", type=float, default=DEFAULT_SCORE_CUTOFF, show_default=True)
@click.option("--labels", default="tree", show_default=True, help="Comma separated class labels")
@jobs_option
def eval_command(gt, pred, out, iou, interp, score_cutoff, labels, jobs):
    """Compute box and mask mAP of detections against annotations"""
    gt = _require(gt, "--gt")
    pred = _require(pred, "--pred")
    out = _require(out, "--out")
    thresholds = parse_thresholds(iou)
    keep = tuple(label.strip() for label in labels.split(","))
    out_dir, name, run_manifest = _output_target(out, ".json", "summary")
    curves = "pr_curves.csv" if out_dir == out else f"{name}.pr_curves.csv"

    parameters = {"iou": list(thresholds), "interp": interp, "score_cutoff": score_cutoff, "labels": keep}
    with Run("eval", out_dir, parameters, inputs=[gt, pred], jobs=jobs, manifest=run_manifest) as run:
        with run.stage("eval"):
            truth = ground_truth_from_annotations(load_annotation_dir(gt, labels=keep))
            detections = [d for d in parse_detections(pred) if d.label in keep]
            report = evaluate(
                truth,
                predictions_from_detections(detections),
                thresholds=thresholds,
                interpolation=interp,
                score_cutoff=score_cutoff,
                jobs=jobs,
            )
            report.summary.write(run.staging / f"{name}.json")
            write_pr_curves(report.curves, run.staging / curves)

    summary = report.summary
    for kind in ("box", "mask"):
        metrics = getattr(summary, kind)
        click.echo(f"{kind} mAP@0.5 = {metrics.map_50}, mAP@[{iou}] = {metrics.map_50_95:.4f}")
    point = summary.operating_point
    click.echo(
        f"precision {point.precision:.3f}, recall {point.recall:.3f}, F1 {point.f1:.3f} "
        f"at score >= {point.score_cutoff}"
    )


@cli.command()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--instances", type=click.IntRange(min=1), default=100, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), default=None, help="Also write mathcheck.json here")
@jobs_option
def mathcheck(seed, instances, out, jobs):
    """Verify loss gradients, the optimizer update and toy convergence"""
    if out is None:
        report = run_mathcheck(seed=seed, instances=instances)
    else:
        with Run("mathcheck", out, {"seed": seed, "instances": instances}, jobs=jobs) as run:
            with run.stage("mathcheck"):
                report = run_mathcheck(seed=seed, instances=instances)
                report.write(run.staging / "mathcheck.json")

    for line in report.lines():
        click.echo(line)

    failed = [c.name for c in report.checks if not c.passed]
    if failed:
        raise MathcheckError(f"{len(failed)} of {len(report.checks)} checks failed: {', '.join(failed)}")


@cli.command()
@click.option("--before", "--earlier", "earlier", type=click.Path(path_type=Path), help="Earlier epoch instances")
@click.option("--after", "--later", "later", type=click.Path(path_type=Path), help="Later epoch instances")
@out_option
@click.option("--max-dist", type=float, default=DEFAULT_MAX_DIST, show_default=True, help="Meters")
@click.option("--strategy", type=click.Choice(["greedy", "optimal"]), default="greedy", show_default=True)
@click.option("--criterion", type=click.Choice(["distance", "iou"]), default="distance", show_default=True)
@click.option("--min-iou", type=float, default=DEFAULT_MIN_IOU, show_default=True)
@click.option("--regions", type=click.Path(path_type=Path), default=None, help="GeoJSON region polygons")
@jobs_option
def change(earlier, later, out, max_dist, strategy, criterion, min_iou, regions, jobs):
    """Classify trees of two epochs as persisted, lost or gained"""
    earlier = _require(earlier, "--before")
    later = _require(later, "--after")
    out = _require(out, "--out")

    parameters = {
        "max_dist": max_dist,
        "strategy": strategy,
        "criterion": criterion,
        "min_iou": min_iou,
        "regions": regions,
    }
    inputs = [earlier, later] + ([regions] if regions else [])
    with Run("change", out, parameters, inputs=inputs, jobs=jobs) as run:
        with run.stage("change"):
            records = match_epochs(
                read_instances(earlier),
                read_instances(later),
                max_dist=max_dist,
                strategy=strategy,
                criterion=criterion,
                min_iou=min_iou,
            )
            summary = summarize(records, strategy, criterion, max_dist)
            areas = read_regions(regions) if regions else []
            write_change_outputs(records, region_report(records, areas), summary, run.staging)

    click.echo(
        f"persisted {summary.persisted}, lost {summary.lost}, gained {summary.gained} "
        f"(net {summary.net_count:+d})"
    )


@cli.command()
@click.option("--spec", "spec_path", type=click.Path(path_type=Path), default=None, help="Synth spec (JSON or YAML)")
@out_option
@click.option("--seed", type=int, default=None, help="Overrides the synth spec's seed")
@click.option("--zoom", type=int, default=DEFAULT_ZOOM, show_default=True)
@jobs_option
def synth(spec_path, out, seed, zoom, jobs):
    """Generate a synthetic scene pair with annotations, detections and a truth ledger"""
    out = _require(out, "--out")
    spec = SynthSpec.from_file(spec_path) if spec_path else SynthSpec()
    if seed is not None:
        spec = spec.model_copy(update={"seed": seed})

    parameters = {"spec": spec.model_dump(mode="json"), "zoom": zoom}
    inputs = [spec_path] if spec_path else []
    with Run("synth", out, parameters, inputs=inputs, jobs=jobs) as run:
        with run.stage("synth"):
            fixture = build_fixture(spec, run.staging, zoom=zoom, jobs=jobs)

    fates = fixture.ledger.fates()
    click.echo(
        f"{len(fixture.ledger.trees)} trees: {len(fates['persisted'])} persisted, "
        f"{len(fates['removed'])} removed, {len(fates['added'])} added; written to {out}"
    )


@cli.command()
@click.option("--config", "config_path", type=click.Path(path_type=Path), help="Pipeline config (YAML)")
@click.option("--out", type=click.Path(path_type=Path), default=None, help="Overrides the config's out")
@click.option("--zoom", type=int, default=None)
@click.option("--seed", type=int, default=None, help="Overrides the split seed")
@click.option("--iou", default=None, help="Overrides the evaluation IoU thresholds")
@click.option("--max-dist", type=float, default=None)
@click.option("--strategy", type=click.Choice(["greedy", "optimal"]), default=None)
@jobs_option
def pipeline(config_path, out, zoom, seed, iou, max_dist, strategy, jobs):
    """Run every stage over a config: synth or tile, split, ingest, eval, change"""
    config_path = _require(config_path, "--config")
    config = PipelineConfig.load(config_path).with_overrides(
        out=out, zoom=zoom, seed=seed, iou=iou, max_dist=max_dist, strategy=strategy
    )
    config.check_paths()

    parameters = config.model_dump(mode="json")
    with Run("pipeline", config.out, parameters, inputs=[config_path] + config.input_paths(), jobs=jobs) as run:
        headline = run_pipeline(config, run, jobs=jobs)

    trees = ", ".join(f"{epoch}: {count}" for epoch, count in headline["trees"].items())
    click.echo(f"trees {trees}")
    click.echo(
        f"persisted {headline['persisted']}, lost {headline['lost']}, gained {headline['gained']}; "
        f"mask mAP {headline['mask_map_50_95']:.4f}, box mAP {headline['box_map_50_95']:.4f}"
    )
    click.echo(f"report written to {config.out}")


def main():
    cli(prog_name="canopy-delta")
