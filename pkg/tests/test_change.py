import itertools

import numpy as np
import pytest
from shapely.geometry import Polygon, box

from canopy_delta.change import (
    ChangeSummary,
    Region,
    centroid_distances,
    count_trees,
    contains_points,
    match_epochs,
    optimal_assignment,
    read_regions,
    region_report,
    summarize,
    write_change_outputs,
)
from canopy_delta.detections import TreeInstance
from canopy_delta.exceptions import ConfigurationError, CRSMismatchError
from canopy_delta.raster import crs

EARLIER = "2011-01-25"
LATER = "2018-12-07"
ORIGIN = (256000.0, 2545000.0)


def tree(id: str, dx: float, dy: float, epoch: str, side: float = 2.0, epsg: int = 32643) -> TreeInstance:
    """Square crown centred `dx`, `dy` meters from ORIGIN"""
    x, y = ORIGIN[0] + dx, ORIGIN[1] + dy
    h = side / 2
    projected = [(x - h, y - h), (x + h, y - h), (x + h, y + h), (x - h, y + h)]
    xs, ys = zip(*projected)
    lons, lats = crs.transform(list(xs), list(ys), epsg, crs.WGS84)
    clon, clat = crs.transform(x, y, epsg, crs.WGS84)
    return TreeInstance(
        id=id,
        polygon=list(zip(map(float, lons), map(float, lats))),
        centroid=(float(clon), float(clat)),
        projected_polygon=projected,
        projected_centroid=(x, y),
        epsg=epsg,
        area_m2=side * side,
        score=0.9,
        epoch=epoch,
    )


def random_epochs(rng, n_earlier: int, n_later: int, spread: float = 10.0):
    earlier = [
        tree(f"e{i}", *rng.uniform(-spread, spread, size=2), EARLIER) for i in range(n_earlier)
    ]
    later = [tree(f"l{j}", *rng.uniform(-spread, spread, size=2), LATER) for j in range(n_later)]
    return earlier, later


def exhaustive_best(distances: np.ndarray, max_dist: float) -> tuple[int, float]:
    """Largest one-to-one matching within max_dist, then smallest total distance"""
    n, m = distances.shape
    best = (0, 0.0)
    for k in range(1, min(n, m) + 1):
        for rows in itertools.combinations(range(n), k):
            for cols in itertools.permutations(range(m), k):
                d = [distances[r, c] for r, c in zip(rows, cols)]
                if max(d) > max_dist:
                    continue
                total = float(sum(d))
                if k > best[0] or (k == best[0] and total < best[1]):
                    best = (k, total)
    return best


class TestMatching:
    def test_greedy_and_optimal_differ(self):
        earlier = [tree("a", 0, 0, EARLIER), tree("b", 2, 0, EARLIER)]
        later = [tree("p", 1, 0, LATER), tree("q", -1.2, 0, LATER)]

        greedy = summarize(match_epochs(earlier, later, strategy="greedy"))
        assert (greedy.persisted, greedy.lost, greedy.gained) == (1, 1, 1)

        records = match_epochs(earlier, later, strategy="optimal")
        optimal = summarize(records, strategy="optimal")
        assert (optimal.persisted, optimal.lost, optimal.gained) == (2, 0, 0)
        assert {(r.earlier.id, r.later.id) for r in records} == {("a", "q"), ("b", "p")}

    def test_greedy_tie_goes_to_lower_id(self):
        earlier = [tree("b", 2, 0, EARLIER), tree("a", 0, 0, EARLIER)]
        later = [tree("p", 1, 0, LATER)]
        records = match_epochs(earlier, later)
        assert records[0].verdict == "persisted"
        assert records[0].earlier.id == "a"

    def test_max_dist_is_inclusive(self):
        earlier = [tree("a", 0, 0, EARLIER)]
        assert match_epochs(earlier, [tree("p", 2.5, 0, LATER)])[0].verdict == "persisted"
        verdicts = [r.verdict for r in match_epochs(earlier, [tree("p", 2.5001, 0, LATER)])]
        assert verdicts == ["lost", "gained"]

    def test_record_order(self):
        earlier = [tree("e2", 0, 0, EARLIER), tree("e1", 50, 0, EARLIER)]
        later = [tree("l1", 0.5, 0, LATER), tree("l0", -50, 0, LATER)]
        records = match_epochs(earlier, later)
        assert [r.verdict for r in records] == ["persisted", "lost", "gained"]
        assert records[0].distance_m == pytest.approx(0.5)
        assert records[1].earlier.id == "e1"
        assert records[2].later.id == "l0"

    def test_iou_criterion(self):
        earlier = [tree("a", 0, 0, EARLIER, side=4)]
        later = [tree("p", 0.4, 0, LATER, side=4), tree("q", 30, 0, LATER, side=4)]
        records = match_epochs(earlier, later, criterion="iou")
        persisted = [r for r in records if r.verdict == "persisted"]
        assert len(persisted) == 1
        assert persisted[0].later.id == "p"
        assert persisted[0].iou == pytest.approx(3.6 / 4.4, abs=0.02)

    def test_area_delta(self):
        records = match_epochs([tree("a", 0, 0, EARLIER, side=2)], [tree("p", 0, 0, LATER, side=3)])
        assert records[0].area_delta_m2 == pytest.approx(5.0)

    def test_empty_epochs(self):
        assert match_epochs([], []) == []
        records = match_epochs([tree("a", 0, 0, EARLIER)], [])
        assert [r.verdict for r in records] == ["lost"]

    def test_crs_mismatch(self):
        with pytest.raises(CRSMismatchError, match="EPSG:32643"):
            match_epochs([tree("a", 0, 0, EARLIER)], [tree("p", 0, 0, LATER, epsg=32644)])

    @pytest.mark.parametrize(
        "kwargs",
        [{"max_dist": 0}, {"max_dist": -1}, {"strategy": "hungarian"}, {"criterion": "area"}],
    )
    def test_invalid_parameters(self, kwargs):
        with pytest.raises(ConfigurationError):
            match_epochs([], [], **kwargs)

    @pytest.mark.parametrize("strategy", ["greedy", "optimal"])
    def test_conservation(self, strategy):
        rng = np.random.default_rng(8)
        for _ in range(50):
            earlier, later = random_epochs(rng, int(rng.integers(0, 15)), int(rng.integers(0, 15)))
            summary = summarize(match_epochs(earlier, later, max_dist=3.0, strategy=strategy))
            assert summary.persisted + summary.lost == len(earlier)
            assert summary.persisted + summary.gained == len(later)
            assert summary.net_count == len(later) - len(earlier)

    def test_optimal_matches_exhaustive_search(self):
        rng = np.random.default_rng(99)
        for _ in range(200):
            earlier, later = random_epochs(rng, int(rng.integers(1, 8)), int(rng.integers(1, 8)), spread=4)
            records = match_epochs(earlier, later, max_dist=3.0, strategy="optimal")
            persisted = [r for r in records if r.verdict == "persisted"]

            ordered_earlier = sorted(earlier, key=lambda i: i.id)
            ordered_later = sorted(later, key=lambda i: i.id)
            count, total = exhaustive_best(centroid_distances(ordered_earlier, ordered_later), 3.0)
            assert len(persisted) == count
            assert sum(r.distance_m for r in persisted) == pytest.approx(total, abs=1e-9)

    @pytest.mark.parametrize("strategy", ["greedy", "optimal"])
    def test_swapping_epochs_swaps_lost_and_gained(self, strategy):
        rng = np.random.default_rng(21)
        for _ in range(50):
            earlier, later = random_epochs(rng, int(rng.integers(0, 12)), int(rng.integers(0, 12)))
            forward = summarize(match_epochs(earlier, later, max_dist=3.0, strategy=strategy))
            backward = summarize(match_epochs(later, earlier, max_dist=3.0, strategy=strategy))
            assert backward.persisted == forward.persisted
            assert (backward.lost, backward.gained) == (forward.gained, forward.lost)

    def test_swapping_epochs_keeps_greedy_pairs(self):
        rng = np.random.default_rng(22)
        for _ in range(50):
            earlier, later = random_epochs(rng, int(rng.integers(1, 12)), int(rng.integers(1, 12)))
            forward = match_epochs(earlier, later, max_dist=3.0)
            backward = match_epochs(later, earlier, max_dist=3.0)
            assert {(r.earlier.id, r.later.id) for r in forward if r.verdict == "persisted"} == {
                (r.later.id, r.earlier.id) for r in backward if r.verdict == "persisted"
            }

    @pytest.mark.parametrize("strategy", ["greedy", "optimal"])
    def test_persisted_grows_with_max_dist(self, strategy):
        rng = np.random.default_rng(23)
        for _ in range(30):
            earlier, later = random_epochs(rng, int(rng.integers(0, 12)), int(rng.integers(0, 12)))
            counts = [
                summarize(match_epochs(earlier, later, max_dist=d, strategy=strategy)).persisted
                for d in (0.5, 1.0, 2.0, 2.5, 4.0, 8.0, 30.0)
            ]
            assert counts == sorted(counts)

    def test_optimal_never_matches_fewer_than_greedy(self):
        rng = np.random.default_rng(24)
        for _ in range(200):
            earlier, later = random_epochs(rng, int(rng.integers(1, 8)), int(rng.integers(1, 8)), spread=4)
            greedy = summarize(match_epochs(earlier, later, max_dist=3.0, strategy="greedy"))
            optimal = summarize(match_epochs(earlier, later, max_dist=3.0, strategy="optimal"))
            assert optimal.persisted >= greedy.persisted

    def test_optimal_assignment_without_candidates(self):
        assert optimal_assignment(np.ones((2, 2)), np.zeros((2, 2), dtype=bool)) == []


def test_summary_conservation_enforced():
    with pytest.raises(ValueError, match="earlier count"):
        ChangeSummary(
            earlier_count=3,
            later_count=2,
            persisted=1,
            gained=1,
            lost=1,
            strategy="greedy",
            criterion="distance",
            max_dist=2.5,
        )


class TestRegions:
    def scene(self):
        earlier = [
            tree("e-west", -20, 0, EARLIER),
            tree("e-cross", -1, 0, EARLIER),
            tree("e-east", 20, 0, EARLIER, side=3),
        ]
        later = [
            tree("l-west", -20.5, 0, LATER),
            tree("l-cross", 1, 0, LATER),
            tree("l-new", 30, 0, LATER),
        ]
        return earlier, later

    def regions(self):
        split_lon, _ = crs.transform(ORIGIN[0], ORIGIN[1], 32643, crs.WGS84)
        _, lat = crs.transform(ORIGIN[0], ORIGIN[1], 32643, crs.WGS84)
        return [
            Region("west", box(split_lon - 0.01, lat - 0.01, split_lon, lat + 0.01)),
            Region("east", box(split_lon, lat - 0.01, split_lon + 0.01, lat + 0.01)),
        ]

    def test_count_trees(self):
        earlier, _ = self.scene()
        west, east = self.regions()
        assert count_trees(earlier) == (3, pytest.approx(17.0))
        assert count_trees(earlier, west) == (2, pytest.approx(8.0))
        assert count_trees(earlier, east) == (1, pytest.approx(9.0))
        assert count_trees([], west) == (0, 0.0)

    def test_region_report(self):
        earlier, later = self.scene()
        records = match_epochs(earlier, later, max_dist=3.0)
        scene, west, east = region_report(records, self.regions())

        assert scene.region_id == "scene"
        assert (scene.persisted, scene.lost, scene.gained) == (2, 1, 1)
        assert scene.polygon is None

        # the tree that moved across the boundary is attributed by its later position
        assert (west.persisted, west.lost, west.gained) == (1, 0, 0)
        assert (east.persisted, east.lost, east.gained) == (1, 1, 1)
        for field in ("persisted", "lost", "gained", "earlier_count", "later_count"):
            assert getattr(west, field) + getattr(east, field) == getattr(scene, field)
        assert west.earlier_area_m2 + east.earlier_area_m2 == pytest.approx(scene.earlier_area_m2)
        assert east.net_count == 0

    def test_self_intersecting_region(self):
        bowtie = Polygon([(0, 0), (1, 1), (1, 0), (0, 1)])
        with pytest.raises(ConfigurationError, match="self-intersecting"):
            contains_points(bowtie, [0.5], [0.2])

    def test_region_with_hole(self):
        outer = [(0, 0), (10, 0), (10, 10), (0, 10)]
        hole = [(4, 4), (6, 4), (6, 6), (4, 6)]
        inside = contains_points(Polygon(outer, [hole]), [1, 5, 11], [1, 5, 5])
        assert inside.tolist() == [True, False, False]

    def test_read_regions(self, tmp_path):
        import geopandas as gpd

        regions = self.regions()
        frame = gpd.GeoDataFrame(
            {"id": [r.id for r in regions]},
            geometry=[r.geometry for r in regions],
            crs="EPSG:4326",
        )
        path = tmp_path / "regions.geojson"
        frame.to_file(path, driver="GeoJSON")

        loaded = read_regions(path)
        assert [r.id for r in loaded] == ["west", "east"]
        assert loaded[0].geometry.bounds == pytest.approx(regions[0].geometry.bounds, abs=1e-9)


def test_write_change_outputs(tmp_path):
    earlier = [tree("a", 0, 0, EARLIER), tree("b", 40, 0, EARLIER)]
    later = [tree("p", 0.5, 0, LATER)]
    records = match_epochs(earlier, later)
    summary = summarize(records)
    paths = write_change_outputs(records, region_report(records), summary, tmp_path)

    assert [p.name for p in paths] == ["changes.geojson", "report.csv", "summary.md"]
    header = (tmp_path / "report.csv").read_text().splitlines()[0]
    assert header.startswith("region,earlier_count,later_count,persisted,gained,lost")
    text = (tmp_path / "summary.md").read_text()
    assert "| persisted | 1 |" in text
    assert "| lost | 1 |" in text
    assert "| net change | -1 |" in text
