import json
import math

import numpy as np
import pytest

from canopy_delta.detections import (
    Detection,
    assemble_scene,
    geo_iou,
    georeference,
    ingest_detections,
    merge_instances,
    parse_detections,
    read_instances,
    seam_overlap,
    union_area,
    write_detections,
    write_instances,
)
from canopy_delta.exceptions import (
    ConfigurationError,
    DetectionSchemaError,
    ManifestLookupError,
    MixedEpochError,
)
from canopy_delta.geometry import bbox
from canopy_delta.raster import TileIndex, TileManifest, TileRecord, lonlat_to_tile, tile_bounds
from canopy_delta.raster.tiles import tile_geotransform

EPOCH = "2018-12-07"

TILE = lonlat_to_tile(72.5, 23.0, 18)
EAST = TileIndex(18, TILE.x + 1, TILE.y)
SOUTH = TileIndex(18, TILE.x, TILE.y + 1)


def record(tile: TileIndex, epoch: str = EPOCH) -> TileRecord:
    return TileRecord(
        z=tile.zoom,
        x=tile.x,
        y=tile.y,
        path=f"{tile}.png",
        bounds=tile_bounds(tile),
        geotransform=tile_geotransform(tile).to_gdal(),
        scene_epsg=32643,
        epoch=epoch,
    )


def manifest(epoch: str = EPOCH) -> TileManifest:
    return TileManifest([record(t, epoch) for t in (TILE, EAST, SOUTH)])


def detection(tile: TileIndex, polygon, score: float = 0.9) -> Detection:
    min_x, min_y, max_x, max_y = bbox(polygon)
    return Detection(
        tile=str(tile),
        score=score,
        bbox=(min_x, min_y, max_x - min_x, max_y - min_y),
        polygon=polygon,
    )


def rectangle(x0, y0, x1, y1):
    return [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]


def ground_pixel_m(tile: TileIndex) -> float:
    _, south, _, north = tile_bounds(tile)
    lat = math.radians((south + north) / 2)
    return tile_geotransform(tile).pixel_width * math.cos(lat)


class TestParse:
    def test_valid_and_rejected(self):
        records = [
            detection(TILE, rectangle(10, 10, 40, 30)).to_record(),
            {"tile": str(TILE), "score": 1.5, "bbox": [10, 10, 30, 20], "polygon": rectangle(10, 10, 40, 30)},
            {"tile": str(TILE), "score": 0.5, "bbox": [0, 0, 5, 5], "polygon": rectangle(10, 10, 40, 30)},
            {"tile": str(TILE), "score": 0.5, "bbox": [10, 10, 30, 20], "polygon": [[10, 10], [40, 10]]},
            "not a record",
        ]
        results = parse_detections(json.dumps(records))
        assert len(results) == 1
        assert [r.index for r in results.rejected] == [1, 2, 3, 4]
        assert "score out of range" in results.rejected[0].reason
        assert "does not contain" in results.rejected[1].reason
        assert "at least 3" in results.rejected[2].reason

    def test_round_trip(self, tmp_path):
        detections = [
            detection(TILE, rectangle(10, 10, 40, 30), 0.8),
            detection(EAST, rectangle(0, 0, 12, 12), 0.4),
        ]
        path = write_detections(detections, tmp_path / "detections.json")
        results = parse_detections(path)
        assert list(results) == detections
        assert list(results.by_tile()) == [str(TILE), str(EAST)]

    @pytest.mark.parametrize("document", ["{", '{"tile": "18/0/0"}', "3"])
    def test_not_an_array(self, document):
        with pytest.raises(DetectionSchemaError):
            parse_detections(document)


class TestGeoreference:
    def test_area(self):
        d = detection(TILE, rectangle(100, 100, 200, 200))
        instance = georeference(d, manifest=manifest())
        side = 100 * ground_pixel_m(TILE)
        assert instance.area_m2 == pytest.approx(side * side, rel=1e-2)
        assert instance.epsg == 32643
        assert instance.epoch == EPOCH
        assert instance.id == f"{EPOCH}/{TILE}"
        assert instance.tile == str(TILE)

    def test_centroid_inside_tile(self):
        d = detection(TILE, rectangle(0, 0, 512, 512))
        instance = georeference(d, epoch=EPOCH)
        west, south, east, north = tile_bounds(TILE)
        lon, lat = instance.centroid
        assert lon == pytest.approx((west + east) / 2, abs=1e-6)
        assert south < lat < north

    def test_needs_epoch(self):
        with pytest.raises(ConfigurationError, match="epoch"):
            georeference(detection(TILE, rectangle(0, 0, 10, 10)))

    def test_unknown_tile(self):
        d = detection(TileIndex(18, 0, 0), rectangle(0, 0, 10, 10))
        with pytest.raises(ManifestLookupError):
            georeference(d, manifest=manifest())


class TestAssemble:
    def test_seam_halves_merge(self):
        left = georeference(detection(TILE, rectangle(480, 200, 512, 240), 0.7), manifest=manifest(), instance_id="a")
        right = georeference(detection(EAST, rectangle(0, 200, 30, 240), 0.9), manifest=manifest(), instance_id="b")

        assert geo_iou(left, right) == pytest.approx(0.0, abs=0.01)
        assert seam_overlap(left, right) == pytest.approx(1.0)

        merged = assemble_scene([left, right])
        assert len(merged) == 1
        assert merged[0].id == "b"
        assert merged[0].score == 0.9
        expected = union_area([left.projected_polygon, right.projected_polygon])
        assert merged[0].area_m2 == pytest.approx(expected, rel=3e-2)
        assert merged[0].area_m2 == pytest.approx(left.area_m2 + right.area_m2, rel=1e-3)

    def test_horizontal_seam(self):
        top = georeference(detection(TILE, rectangle(100, 490, 140, 512)), manifest=manifest(), instance_id="a")
        bottom = georeference(detection(SOUTH, rectangle(110, 0, 150, 20)), manifest=manifest(), instance_id="b")
        assert seam_overlap(top, bottom) == pytest.approx(30 / 40)
        assert len(assemble_scene([top, bottom])) == 1

    def test_separate_trees_stay_separate(self):
        a = georeference(detection(TILE, rectangle(10, 10, 40, 40)), manifest=manifest(), instance_id="a")
        b = georeference(detection(TILE, rectangle(300, 300, 340, 340)), manifest=manifest(), instance_id="b")
        c = georeference(detection(EAST, rectangle(0, 10, 30, 40)), manifest=manifest(), instance_id="c")
        assert seam_overlap(a, b) == 0.0
        assert len(assemble_scene([a, b, c])) == 3

    def test_duplicate_detection(self):
        a = georeference(detection(TILE, rectangle(10, 10, 40, 40), 0.3), manifest=manifest(), instance_id="a")
        b = georeference(detection(TILE, rectangle(11, 10, 41, 40), 0.6), manifest=manifest(), instance_id="b")
        assert geo_iou(a, b) > 0.9
        merged = assemble_scene([a, b])
        assert [m.id for m in merged] == ["b"]

    def test_idempotent(self):
        instances = [
            georeference(detection(TILE, rectangle(480, 200, 512, 240)), manifest=manifest(), instance_id="a"),
            georeference(detection(EAST, rectangle(0, 200, 30, 240)), manifest=manifest(), instance_id="b"),
            georeference(detection(TILE, rectangle(10, 10, 40, 40)), manifest=manifest(), instance_id="c"),
        ]
        once = assemble_scene(instances)
        assert assemble_scene(once) == once

    def test_merge_keeps_largest_part(self):
        small = georeference(detection(TILE, rectangle(10, 10, 30, 30), 0.9), manifest=manifest(), instance_id="a")
        large = georeference(detection(TILE, rectangle(200, 200, 260, 260), 0.5), manifest=manifest(), instance_id="b")
        merged = merge_instances(small, large)
        assert merged.id == "a"
        assert merged.score == 0.9
        assert merged.area_m2 == pytest.approx(large.area_m2, rel=1e-6)
        assert merged.projected_centroid == pytest.approx(large.projected_centroid, abs=1e-6)

    def test_fewer_trees_as_threshold_drops(self):
        rng = np.random.default_rng(31)
        instances = []
        for slot in range(16):
            x0, y0 = 20 + 120 * (slot % 4), 20 + 120 * (slot // 4)
            shift = float(rng.uniform(0, 25))
            for k, dx in enumerate((0.0, shift)):
                box = rectangle(x0 + dx, y0, x0 + dx + 30, y0 + 30)
                instances.append(georeference(detection(TILE, box), manifest=manifest(), instance_id=f"{slot}-{k}"))

        thresholds = [0.95, 0.8, 0.6, 0.4, 0.2, 0.05]
        counts = [len(assemble_scene(instances, dedupe_iou=t)) for t in thresholds]
        assert counts == sorted(counts, reverse=True)
        assert counts[-1] == 16

    def test_empty(self):
        assert assemble_scene([]) == []

    def test_mixed_epochs(self):
        a = georeference(detection(TILE, rectangle(10, 10, 40, 40)), epoch="2011-01-25")
        b = georeference(detection(TILE, rectangle(10, 10, 40, 40)), epoch=EPOCH)
        with pytest.raises(MixedEpochError):
            assemble_scene([a, b])


class TestIngest:
    def detections(self):
        return [
            detection(TILE, rectangle(480, 200, 512, 240), 0.7),
            detection(TILE, rectangle(10, 10, 40, 40), 0.8),
            detection(EAST, rectangle(0, 200, 30, 240), 0.9),
        ]

    def test_counts(self):
        report = ingest_detections(self.detections(), manifest())
        assert report.epoch == EPOCH
        assert report.per_tile_counts == {str(TILE): 2, str(EAST): 1}
        assert report.tile_count_sum == 3
        assert report.scene_count == 2
        assert {i.id for i in report.instances} == {f"{EPOCH}/{TILE}/1", f"{EPOCH}/{EAST}/2"}

    def test_epoch_from_manifest(self):
        assert ingest_detections([], manifest("2011-01-25")).epoch == "2011-01-25"
        assert ingest_detections([], manifest(), epoch="2020").epoch == "2020"

    def test_no_epoch(self):
        with pytest.raises(ConfigurationError, match="No epoch"):
            ingest_detections([], TileManifest([]))

    def test_parallel_matches_serial(self):
        serial = ingest_detections(self.detections(), manifest(), jobs=1)
        parallel = ingest_detections(self.detections(), manifest(), jobs=2)
        assert serial.instances == parallel.instances

    def test_geojson_round_trip(self, tmp_path):
        report = ingest_detections(self.detections(), manifest())
        path = write_instances(report.instances, tmp_path / "instances.geojson")
        document = json.loads(path.read_text())
        assert document["type"] == "FeatureCollection"
        assert len(document["features"]) == 2

        loaded = read_instances(path)
        for a, b in zip(loaded, report.instances):
            assert a.id == b.id
            assert a.area_m2 == pytest.approx(b.area_m2)
            assert a.projected_centroid == pytest.approx(b.projected_centroid)
            assert a.tile == b.tile

    def test_read_instances_errors(self, tmp_path):
        with pytest.raises(DetectionSchemaError, match="not found"):
            read_instances(tmp_path / "missing.geojson")
        path = tmp_path / "bad.geojson"
        path.write_text('{"type": "Feature"}')
        with pytest.raises(DetectionSchemaError, match="FeatureCollection"):
            read_instances(path)
