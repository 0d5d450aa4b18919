import json

import numpy as np
import pytest
from click.testing import CliRunner

from canopy_delta import __version__
from canopy_delta.cli import cli
from canopy_delta.raster import SceneDescriptor, write_scene

from .utils import TEST_DATA_PATH, tree_hashes

EARLIER, LATER = "2011-01-25", "2018-12-07"


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def synth_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    result = CliRunner().invoke(cli, ["synth", "--spec", str(TEST_DATA_PATH / "synth.yml"), "--out", str(out)])
    assert result.exit_code == 0, result.output
    return out


def test_version(runner):
    result = runner.invoke(cli, ["--version"])
    assert result.exit_code == 0
    assert __version__ in result.output


def test_unknown_command(runner):
    assert runner.invoke(cli, ["frobnicate"]).exit_code == 2


@pytest.mark.parametrize(
    "args,flag",
    [
        (["eval", "--pred", "p.json", "--out", "o"], "--gt"),
        (["tile", "--out", "o"], "--scene"),
        (["change", "--before", "a", "--after", "b"], "--out"),
        (["change", "--after", "b", "--out", "o"], "--before"),
        (["ingest", "--detections", "d.json", "--manifest", "m.json", "--out", "o.geojson"], "--epoch"),
        (["pipeline"], "--config"),
    ],
)
def test_missing_option(runner, args, flag):
    result = runner.invoke(cli, args)
    assert result.exit_code == 1
    assert "error[config]" in result.output
    assert flag in result.output


def test_missing_input(runner, tmp_path):
    result = runner.invoke(cli, ["split", "--annotations", str(tmp_path / "nothing"), "--out", str(tmp_path / "out")])
    assert result.exit_code == 1
    assert "error[config]: Input not found" in result.output


def test_mathcheck(runner, tmp_path):
    result = runner.invoke(cli, ["mathcheck", "--instances", "5", "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output
    assert (tmp_path / "mathcheck.json").exists()
    manifest = json.loads((tmp_path / "run.json").read_text())
    assert manifest["command"] == "mathcheck"
    assert manifest["parameters"] == {"seed": 0, "instances": 5}


class TestSynth:
    def test_outputs(self, synth_out):
        manifest = json.loads((synth_out / "run.json").read_text())
        assert manifest["command"] == "synth"
        outputs = {o["path"] for o in manifest["outputs"]}
        assert "ledger.json" in outputs
        assert f"detections/{EARLIER}.json" in outputs
        assert f"tiles/{LATER}/manifest.json" in outputs
        assert not (synth_out / ".staging").exists()
        assert "jobs" not in manifest["parameters"]
        assert json.loads((synth_out / "run.timings.json").read_text())["stages"]["synth"] >= 0

    def test_ingest_and_change(self, runner, synth_out, tmp_path):
        for epoch in (EARLIER, LATER):
            result = runner.invoke(
                cli,
                [
                    "ingest",
                    "--detections",
                    str(synth_out / "detections" / f"{epoch}.json"),
                    "--manifest",
                    str(synth_out / "tiles" / epoch / "manifest.json"),
                    "--epoch",
                    epoch,
                    "--out",
                    str(tmp_path / f"instances_{epoch}.geojson"),
                ],
            )
            assert result.exit_code == 0, result.output
            assert f"epoch {epoch}: 8 trees" in result.output
            assert (tmp_path / f"instances_{epoch}.ingest.json").exists()
            manifest = json.loads((tmp_path / f"instances_{epoch}.run.json").read_text())
            assert {o["path"] for o in manifest["outputs"]} == {
                f"instances_{epoch}.geojson",
                f"instances_{epoch}.ingest.json",
            }

        result = runner.invoke(
            cli,
            [
                "change",
                "--before",
                str(tmp_path / f"instances_{EARLIER}.geojson"),
                "--after",
                str(tmp_path / f"instances_{LATER}.geojson"),
                "--out",
                str(tmp_path / "change"),
                "--strategy",
                "optimal",
            ],
        )
        assert result.exit_code == 0, result.output
        assert "persisted 6, lost 2, gained 2 (net +0)" in result.output
        assert (tmp_path / "change" / "summary.md").exists()

    def test_legacy_flag_names(self, runner, synth_out, tmp_path):
        for epoch in (EARLIER, LATER):
            args = ["--detections", str(synth_out / "detections" / f"{epoch}.json"), "--epoch", epoch]
            args += ["--tiles", str(synth_out / "tiles" / epoch), "--out", str(tmp_path / epoch)]
            result = runner.invoke(cli, ["ingest", *args])
            assert result.exit_code == 0, result.output
            assert (tmp_path / epoch / "instances.geojson").exists()
            assert (tmp_path / epoch / "run.json").exists()

        result = runner.invoke(
            cli,
            [
                "change",
                "--earlier",
                str(tmp_path / EARLIER / "instances.geojson"),
                "--later",
                str(tmp_path / LATER / "instances.geojson"),
                "--out",
                str(tmp_path / "change"),
            ],
        )
        assert result.exit_code == 0, result.output
        assert "persisted" in result.output

    def test_eval(self, runner, synth_out, tmp_path):
        result = runner.invoke(
            cli,
            [
                "eval",
                "--gt",
                str(synth_out / "labels" / EARLIER),
                "--pred",
                str(synth_out / "detections" / f"{EARLIER}.json"),
                "--out",
                str(tmp_path / "summary.json"),
                "--iou",
                "0.5,0.75",
            ],
        )
        assert result.exit_code == 0, result.output
        assert "mask mAP@0.5" in result.output
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["mask"]["map_50"] == pytest.approx(1.0)
        assert summary["thresholds"] == [0.5, 0.75]
        assert (tmp_path / "summary.pr_curves.csv").exists()
        assert (tmp_path / "summary.run.json").exists()

    def test_eval_into_directory(self, runner, synth_out, tmp_path):
        gt, pred = str(synth_out / "labels" / EARLIER), str(synth_out / "detections" / f"{EARLIER}.json")
        result = runner.invoke(cli, ["eval", "--gt", gt, "--pred", pred, "--iou", "0.5:0.95", "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert len(summary["thresholds"]) == 10
        assert (tmp_path / "pr_curves.csv").exists()

    def test_split(self, runner, synth_out, tmp_path):
        result = runner.invoke(
            cli, ["split", "--annotations", str(synth_out / "labels" / LATER), "--out", str(tmp_path)]
        )
        assert result.exit_code == 0, result.output
        names = sum(len((tmp_path / f"{s}.txt").read_text().split()) for s in ("train", "val", "test"))
        assert names == len(list((synth_out / "labels" / LATER).glob("*.json")))


class TestTile:
    def scene(self, tmp_path):
        scene = SceneDescriptor(
            width=64,
            height=48,
            bands=4,
            dtype="u16",
            geotransform=(256000.0, 0.5, 0.0, 2545000.0, 0.0, -0.5),
            epsg=32643,
            date=EARLIER,
            gsd_m=0.5,
        )
        samples = np.random.default_rng(0).integers(0, 4096, size=(4, 48, 64), dtype=np.uint16)
        write_scene(tmp_path / "scene", scene, samples)
        return tmp_path / "scene"

    def test_tile(self, runner, tmp_path):
        stem = self.scene(tmp_path)
        result = runner.invoke(cli, ["tile", "--scene", str(stem), "--zoom", "19", "--out", str(tmp_path / "tiles")])
        assert result.exit_code == 0, result.output
        manifest = json.loads((tmp_path / "tiles" / "run.json").read_text())
        assert len(manifest["inputs"]) == 2
        assert "manifest.json" in {o["path"] for o in manifest["outputs"]}

    def test_failure_is_quarantined(self, runner, tmp_path):
        stem = self.scene(tmp_path)
        out = tmp_path / "tiles"
        result = runner.invoke(cli, ["tile", "--scene", str(stem), "--zoom", "12", "--out", str(out)])
        assert result.exit_code == 1
        assert "error[config]" in result.output
        assert (out / ".failed").is_dir()
        assert not (out / ".staging").exists()
        assert not (out / "run.json").exists()

    def test_invalid_bands(self, runner, tmp_path):
        stem = self.scene(tmp_path)
        result = runner.invoke(cli, ["tile", "--scene", str(stem), "--bands", "1,x", "--out", str(tmp_path / "t")])
        assert result.exit_code == 1
        assert "--bands" in result.output


class TestPipeline:
    def run(self, runner, out, *args):
        return runner.invoke(
            cli, ["pipeline", "--config", str(TEST_DATA_PATH / "pipeline.yml"), "--out", str(out), *args]
        )

    def test_report(self, runner, tmp_path):
        result = self.run(runner, tmp_path)
        assert result.exit_code == 0, result.output
        assert f"trees {EARLIER}: 12, {LATER}: 12" in result.output

        for path in (
            "change/summary.md",
            "change/report.csv",
            "change/changes.geojson",
            "eval/summary.json",
            "eval/pr_curves.csv",
            f"instances/{EARLIER}.geojson",
            "split/train.txt",
            "fixture/ledger.json",
            "train.yml",
            "run.json",
        ):
            assert (tmp_path / path).exists(), path

        summary = json.loads((tmp_path / "eval" / "summary.json").read_text())
        assert summary["mask"]["map_50_95"] == pytest.approx(1.0)

    def test_rerun_is_reproducible(self, runner, tmp_path):
        def outputs():
            return {k: v for k, v in tree_hashes(tmp_path).items() if not k.endswith("timings.json")}

        assert self.run(runner, tmp_path, "--jobs", "1").exit_code == 0
        first = outputs()
        assert self.run(runner, tmp_path, "--jobs", "8").exit_code == 0
        assert outputs() == first
        assert "run.json" in first

    def test_override(self, runner, tmp_path):
        result = self.run(runner, tmp_path, "--strategy", "greedy", "--iou", "0.5")
        assert result.exit_code == 0, result.output
        manifest = json.loads((tmp_path / "run.json").read_text())
        assert manifest["parameters"]["change"]["strategy"] == "greedy"
        assert manifest["parameters"]["eval"]["iou"] == "0.5"

    def test_invalid_override(self, runner, tmp_path):
        result = self.run(runner, tmp_path, "--iou", "2")
        assert result.exit_code == 1
        assert "error[config]" in result.output

    def test_invalid_config(self, runner, tmp_path):
        path = tmp_path / "bad.yml"
        path.write_text("scenes:\n  2011-01-25: a\n")
        result = runner.invoke(cli, ["pipeline", "--config", str(path)])
        assert result.exit_code == 1
        assert "error[config]: Invalid config" in result.output
