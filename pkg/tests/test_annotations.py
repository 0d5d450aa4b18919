import json

import numpy as np
import pytest
import shapely
from PIL import Image
from shapely.geometry import Polygon

from canopy_delta.annotations import (
    PolygonAnnotation,
    allocate,
    annotation_document,
    export_mask_png,
    load_annotation_dir,
    parse_annotation_file,
    polygon_to_mask,
    rasterize,
    split_dataset,
    write_annotation_file,
)
from canopy_delta.exceptions import (
    AnnotationParseError,
    ConfigurationError,
    DegeneratePolygonError,
)
from canopy_delta.geometry import points_in_polygon

from .utils import TEST_DATA_PATH

FIXTURE = TEST_DATA_PATH / "18_183864_113855.json"


def star_polygon(rng, center=(32.0, 32.0), points: int = 9):
    """Random simple polygon: vertices at sorted angles around a center"""
    angles = np.sort(rng.uniform(0, 2 * np.pi, size=points))
    radii = rng.uniform(4, 28, size=points)
    return [
        (float(center[0] + r * np.cos(a)), float(center[1] + r * np.sin(a)))
        for a, r in zip(angles, radii)
    ]


class TestParse:
    def test_fixture(self):
        doc = parse_annotation_file(FIXTURE)
        assert doc.image_id == "18_183864_113855"
        assert (doc.image_width, doc.image_height) == (512, 512)
        assert len(doc) == 5
        assert doc.skipped == 1
        assert [r.index for r in doc.rejected] == [5, 6]
        assert "self-intersecting" in doc.rejected[0].reason
        assert "2 points" in doc.rejected[1].reason
        assert all(a.label == "tree" for a in doc)

    def test_duplicate_vertex_removed(self):
        doc = parse_annotation_file(FIXTURE)
        assert len(doc[2].vertices) == 4

    def test_all_labels(self):
        doc = parse_annotation_file(FIXTURE, labels=None)
        assert len(doc) == 6
        assert doc[5].label == "road"

    def test_text_and_dict_inputs_agree(self):
        text = FIXTURE.read_text()
        from_text = parse_annotation_file(text)
        from_dict = parse_annotation_file(json.loads(text))
        assert from_text.annotations == from_dict.annotations

    def test_image_id_override(self):
        doc = parse_annotation_file(FIXTURE, image_id="tile-a")
        assert doc.image_id == "tile-a"
        assert doc[0].image_id == "tile-a"

    def test_malformed_json(self):
        with pytest.raises(AnnotationParseError, match="line 1"):
            parse_annotation_file('{"shapes": [')

    @pytest.mark.parametrize("document", ["[]", '{"shapes": {}}', "{}"])
    def test_wrong_schema(self, document):
        with pytest.raises(AnnotationParseError, match="'shapes' list"):
            parse_annotation_file(document)

    def test_vertex_outside_image(self):
        document = annotation_document("a.png", 100, 100, [("tree", [(0, 0), (120, 0), (50, 50)])])
        doc = parse_annotation_file(document)
        assert len(doc) == 0
        assert "outside" in doc.rejected[0].reason

    def test_windows_image_path(self):
        document = annotation_document("C:\\tiles\\18_1_2.png", 512, 512, [])
        assert parse_annotation_file(document).image_id == "18_1_2"

    def test_load_dir(self, tmp_path):
        for name in ("b", "a"):
            document = annotation_document(f"{name}.png", 64, 64, [("tree", [(1, 1), (9, 1), (5, 9)])])
            write_annotation_file(tmp_path / f"{name}.json", document)
        documents = load_annotation_dir(tmp_path)
        assert list(documents) == ["a", "b"]
        assert len(documents["a"]) == 1


class TestRasterize:
    def test_top_left_rule(self):
        grid = rasterize([(0.5, 0.5), (2.5, 0.5), (2.5, 2.5), (0.5, 2.5)], 4, 4)
        expected = np.zeros((4, 4), dtype=bool)
        expected[:2, :2] = True
        np.testing.assert_array_equal(grid, expected)

    def test_square_area(self):
        grid = rasterize([(10, 10), (30, 10), (30, 20), (10, 20)], 64, 64)
        assert grid.sum() == 200
        assert grid[10:20, 10:30].all()

    def test_closing_vertex_ignored(self):
        square = [(1, 1), (5, 1), (5, 5), (1, 5)]
        np.testing.assert_array_equal(
            rasterize(square, 8, 8), rasterize(square + [square[0]], 8, 8)
        )

    def test_clipped_to_grid(self):
        grid = rasterize([(-10, -10), (4, -10), (4, 4), (-10, 4)], 8, 8)
        assert grid.sum() == 16

    def test_matches_point_in_polygon(self):
        rng = np.random.default_rng(2024)
        cols, rows = np.meshgrid(np.arange(64) + 0.5, np.arange(64) + 0.5)
        for _ in range(200):
            vertices = star_polygon(rng)
            grid = rasterize(vertices, 64, 64)
            expected = shapely.contains_xy(Polygon(vertices), cols, rows)
            np.testing.assert_array_equal(grid, expected)
            np.testing.assert_array_equal(grid, points_in_polygon(vertices, cols, rows))

    def test_integer_shift_moves_mask(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            vertices = star_polygon(rng)
            dx, dy = (int(v) for v in rng.integers(0, 40, size=2))
            shifted = [(x + dx, y + dy) for x, y in vertices]
            grid = rasterize(vertices, 64, 64)
            moved = rasterize(shifted, 128, 128)
            np.testing.assert_array_equal(moved[dy : dy + 64, dx : dx + 64], grid)
            assert moved.sum() == grid.sum()

    def test_polygon_to_mask(self):
        annotation = parse_annotation_file(FIXTURE)[0]
        mask = polygon_to_mask(annotation)
        assert mask.shape == (512, 512)
        assert mask.image_id == "18_183864_113855"
        assert mask.area == pytest.approx(Polygon(annotation.vertices).area, rel=0.05)

    def test_sliver_is_degenerate(self):
        with pytest.raises(DegeneratePolygonError):
            polygon_to_mask([(0.1, 0.1), (0.4, 0.1), (0.2, 0.3)], 8, 8)

    def test_export_png(self, tmp_path):
        mask = polygon_to_mask([(1, 1), (5, 1), (5, 5), (1, 5)], 8, 8)
        export_mask_png(mask, tmp_path / "mask.png")
        image = Image.open(tmp_path / "mask.png")
        assert image.mode == "1"
        assert np.count_nonzero(np.asarray(image)) == 16


def test_polygon_annotation_validation():
    with pytest.raises(ValueError, match="at least 3"):
        PolygonAnnotation(label="tree", vertices=[(0, 0), (1, 1), (1, 1)], image_id="x")


class TestSplit:
    @pytest.mark.parametrize(
        "n,expected",
        [
            (10, (7, 2, 1)),
            (9, (7, 2, 0)),
            (100, (70, 20, 10)),
            (1, (1, 0, 0)),
            (2, (2, 0, 0)),
            (3, (3, 0, 0)),
        ],
    )
    def test_allocate(self, n, expected):
        assert allocate(n, (0.7, 0.2, 0.1)) == expected

    def test_partition_properties(self):
        rng = np.random.default_rng(0)
        for trial in range(1000):
            n = int(rng.integers(1, 300))
            ids = [f"18_{x}_{y}" for x, y in rng.integers(0, 10**6, size=(n, 2))]
            ids = list(dict.fromkeys(ids))
            split = split_dataset(ids, seed=trial)

            assert sorted(split.train + split.val + split.test) == sorted(ids)
            for size, ratio in zip(split.sizes, (0.7, 0.2, 0.1)):
                assert abs(size - len(ids) * ratio) <= 1

            again = split_dataset(list(reversed(ids)), seed=trial)
            assert again == split

    def test_seed_changes_split(self):
        ids = [str(i) for i in range(50)]
        assert split_dataset(ids, seed=1).train != split_dataset(ids, seed=2).train

    def test_write(self, tmp_path):
        split = split_dataset([str(i) for i in range(10)], seed=3)
        paths = split.write(tmp_path)
        assert [p.name for p in paths] == ["train.txt", "val.txt", "test.txt"]
        assert (tmp_path / "train.txt").read_text().splitlines() == split.train

    @pytest.mark.parametrize(
        "ids,ratios",
        [
            ([], (0.7, 0.2, 0.1)),
            (["a", "a"], (0.7, 0.2, 0.1)),
            (["a"], (0.5, 0.5)),
            (["a"], (0.7, 0.2, 0.2)),
            (["a"], (1.1, -0.1, 0.0)),
        ],
    )
    def test_invalid(self, ids, ratios):
        with pytest.raises(ConfigurationError):
            split_dataset(ids, ratios)
