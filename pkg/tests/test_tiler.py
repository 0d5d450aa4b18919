import json

import numpy as np
import pytest
from PIL import Image

from canopy_delta.exceptions import ConfigurationError, ManifestLookupError, RasterReadError
from canopy_delta.raster import (
    SceneDescriptor,
    TileIndex,
    TileManifest,
    apply_stretch,
    lonlat_to_tile,
    percentile_limits,
    plan_tiles,
    read_scene,
    read_tile_samples,
    stretch_to_8bit,
    tile_geotransform,
    tile_scene,
    write_scene,
)

from .utils import tree_hashes


def aligned_scene(size: int = 1024, seed: int = 0):
    """A web-mercator scene whose pixel grid is exactly the zoom-18 tile grid"""
    tile = lonlat_to_tile(72.5, 23.003, 18)
    transform = tile_geotransform(tile)
    scene = SceneDescriptor(
        width=size,
        height=size,
        bands=4,
        dtype="u16",
        geotransform=transform.to_gdal(),
        epsg=3857,
        date="2018-12-07",
        gsd_m=transform.pixel_width,
    )
    samples = np.random.default_rng(seed).integers(0, 4096, size=(4, size, size), dtype=np.uint16)
    return tile, scene, samples


def utm_scene():
    scene = SceneDescriptor(
        width=64,
        height=48,
        bands=3,
        dtype="u8",
        geotransform=(256000.0, 0.5, 0.0, 2545000.0, 0.0, -0.5),
        epsg=32643,
        date="2011-01-25",
        gsd_m=0.5,
    )
    samples = np.arange(3 * 48 * 64, dtype=np.uint8).reshape(3, 48, 64)
    return scene, samples


class TestScene:
    def test_round_trip(self, tmp_path):
        scene, samples = utm_scene()
        raw_path, sidecar_path = write_scene(tmp_path / "scene_2011", scene, samples)
        assert raw_path.name == "scene_2011.raw"
        assert sidecar_path.name == "scene_2011.scene.json"

        for path in (tmp_path / "scene_2011", raw_path, sidecar_path):
            loaded, loaded_samples = read_scene(path)
            assert loaded == scene
            np.testing.assert_array_equal(loaded_samples, samples)

    def test_sidecar_uses_short_names(self, tmp_path):
        scene, samples = utm_scene()
        _, sidecar_path = write_scene(tmp_path / "s", scene, samples)
        document = json.loads(sidecar_path.read_text())
        assert document["bands"] == 3
        assert document["dtype"] == "u8"
        assert document["date"] == "2011-01-25"
        assert document["gsd_m"] == 0.5

    def test_epoch(self):
        scene, _ = utm_scene()
        assert scene.epoch == "2011-01-25"

    def test_missing(self, tmp_path):
        with pytest.raises(RasterReadError, match="not found"):
            read_scene(tmp_path / "nothing")

    def test_truncated_raster(self, tmp_path):
        scene, samples = utm_scene()
        raw_path, _ = write_scene(tmp_path / "s", scene, samples)
        raw_path.write_bytes(raw_path.read_bytes()[:-10])
        with pytest.raises(RasterReadError, match="sidecar declares"):
            read_scene(tmp_path / "s")

    def test_degenerate_geotransform(self, tmp_path):
        scene, samples = utm_scene()
        _, sidecar_path = write_scene(tmp_path / "s", scene, samples)
        document = json.loads(sidecar_path.read_text())
        document["geotransform"] = [0, 0, 0, 0, 0, -1]
        sidecar_path.write_text(json.dumps(document))
        with pytest.raises(RasterReadError, match="Invalid scene sidecar"):
            read_scene(tmp_path / "s")

    def test_invalid_json(self, tmp_path):
        (tmp_path / "s.scene.json").write_text("{")
        with pytest.raises(RasterReadError, match="not valid JSON"):
            read_scene(tmp_path / "s")


class TestStretch:
    def test_monotone(self):
        rng = np.random.default_rng(0)
        samples = rng.integers(0, 65535, size=(64, 64)).astype(np.uint16)
        out = stretch_to_8bit(samples)
        order = np.argsort(samples, axis=None, kind="stable")
        assert out.dtype == np.uint8
        assert np.all(np.diff(out.ravel()[order].astype(int)) >= 0)
        assert out.min() == 0
        assert out.max() == 255

    def test_constant(self):
        out = stretch_to_8bit(np.full((8, 8), 1000, dtype=np.uint16))
        assert not out.any()

    def test_apply(self):
        out = apply_stretch(np.array([0, 50, 100, 150, 200]), 50, 150)
        assert out.tolist() == [0, 0, 128, 255, 255]

    @pytest.mark.parametrize("low,high", [(50, 50), (90, 10), (-1, 50), (0, 101)])
    def test_invalid_percentiles(self, low, high):
        with pytest.raises(ValueError, match="Percentiles"):
            percentile_limits(np.arange(10), low, high)

    def test_empty(self):
        with pytest.raises(ValueError, match="empty"):
            percentile_limits(np.zeros(0), 2, 98)


class TestPlanTiles:
    def test_ahmedabad_extent(self):
        # lon/lat scene over 72.4587..72.5716 E, 22.9942..23.0835 N
        scene = SceneDescriptor(
            width=1129,
            height=893,
            bands=4,
            dtype="u16",
            geotransform=(72.4587, 0.0001, 0.0, 23.0835, 0.0, -0.0001),
            epsg=4326,
            date="2018-12-07",
            gsd_m=0.5,
        )
        tiles = plan_tiles(scene, 18)
        assert len(tiles) == 84 * 71
        assert {t.x for t in tiles} == set(range(183834, 183918))
        assert {t.y for t in tiles} == set(range(113789, 113860))


class TestTileScene:
    def test_aligned_scene_gives_four_tiles(self, tmp_path):
        tile, scene, samples = aligned_scene()
        assert plan_tiles(scene, 18) == [
            TileIndex(18, tile.x, tile.y),
            TileIndex(18, tile.x, tile.y + 1),
            TileIndex(18, tile.x + 1, tile.y),
            TileIndex(18, tile.x + 1, tile.y + 1),
        ]

        manifest = tile_scene(scene, samples, 18, tmp_path, write_raw=True)
        assert len(manifest) == 4

        for record in manifest:
            tile_samples = read_tile_samples(record, tmp_path, scene)
            row = (record.y - tile.y) * 512
            col = (record.x - tile.x) * 512
            np.testing.assert_array_equal(
                tile_samples, samples[:, row : row + 512, col : col + 512]
            )

    def test_manifest_round_trip(self, tmp_path):
        tile, scene, samples = aligned_scene()
        manifest = tile_scene(scene, samples, 18, tmp_path)
        loaded = TileManifest.read(tmp_path)

        assert [r.tile_id for r in loaded] == [r.tile_id for r in manifest]
        record = loaded.get(f"18/{tile.x}/{tile.y}")
        assert record.path == f"18/{tile.x}/{tile.y}.png"
        assert record.raw is None
        assert record.epoch == "2018-12-07"
        assert record.scene_epsg == 3857
        assert record.transform.to_gdal() == tile_geotransform(tile).to_gdal()
        assert f"18/{tile.x}/{tile.y}" in loaded

        with pytest.raises(ManifestLookupError, match="not in the manifest"):
            loaded.get("18/0/0")

    def test_png_is_rgb(self, tmp_path):
        tile, scene, samples = aligned_scene()
        tile_scene(scene, samples, 18, tmp_path)
        image = Image.open(tmp_path / "18" / str(tile.x) / f"{tile.y}.png")
        assert image.size == (512, 512)
        assert image.mode == "RGB"

    def test_grayscale_band(self, tmp_path):
        tile, scene, samples = aligned_scene()
        tile_scene(scene, samples, 18, tmp_path, bands=(3,), stretch=None)
        image = Image.open(tmp_path / "18" / str(tile.x) / f"{tile.y}.png")
        assert image.mode == "L"

    def test_nodata_outside_scene(self, tmp_path):
        tile, scene, samples = aligned_scene(size=768)
        manifest = tile_scene(scene, samples, 18, tmp_path, write_raw=True, nodata=7)
        corner = manifest.get(f"18/{tile.x + 1}/{tile.y + 1}")
        tile_samples = read_tile_samples(corner, tmp_path, scene)
        assert np.all(tile_samples[:, 256:, :] == 7)
        assert np.all(tile_samples[:, :, 256:] == 7)
        np.testing.assert_array_equal(tile_samples[:, :256, :256], samples[:, 512:, 512:])
        assert corner.nodata == 7

    def test_parallel_output_is_identical(self, tmp_path):
        _, scene, samples = aligned_scene()
        tile_scene(scene, samples, 18, tmp_path / "serial", write_raw=True, jobs=1)
        tile_scene(scene, samples, 18, tmp_path / "parallel", write_raw=True, jobs=2)
        assert tree_hashes(tmp_path / "serial") == tree_hashes(tmp_path / "parallel")

    def test_projected_scene(self, tmp_path):
        scene, samples = utm_scene()
        manifest = tile_scene(scene, samples, 19, tmp_path)
        assert len(manifest) >= 1
        assert all(r.scene_epsg == 32643 for r in manifest)
        assert all(r.epoch == "2011-01-25" for r in manifest)

    @pytest.mark.parametrize("zoom", [12, 20])
    def test_zoom_outside_range(self, tmp_path, zoom):
        _, scene, samples = aligned_scene(size=512)
        with pytest.raises(ConfigurationError, match="outside the configured range"):
            tile_scene(scene, samples, zoom, tmp_path)

    def test_zoom_range_can_be_widened(self, tmp_path):
        _, scene, samples = aligned_scene(size=512)
        manifest = tile_scene(scene, samples, 17, tmp_path, zoom_range=(10, 19))
        assert len(manifest) == 1

    @pytest.mark.parametrize("bands", [(0, 1), (0, 1, 4), (-1,)])
    def test_invalid_bands(self, tmp_path, bands):
        _, scene, samples = aligned_scene(size=512)
        with pytest.raises(ConfigurationError, match="display bands"):
            tile_scene(scene, samples, 18, tmp_path, bands=bands)

    def test_sample_shape_mismatch(self, tmp_path):
        _, scene, samples = aligned_scene(size=512)
        with pytest.raises(RasterReadError):
            tile_scene(scene, samples[:3], 18, tmp_path)
