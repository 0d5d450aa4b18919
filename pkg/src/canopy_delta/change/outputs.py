from pathlib import Path

import geopandas as gpd
import pandas as pd
from shapely.geometry import Polygon

from canopy_delta.change.models import ChangeRecord, ChangeSummary, RegionReport
from canopy_delta.raster import crs

CHANGES_NAME = "changes.geojson"
REPORT_NAME = "report.csv"
SUMMARY_NAME = "summary.md"


def changes_frame(records: list[ChangeRecord]) -> gpd.GeoDataFrame:
    """One lon/lat polygon per record: the later outline for persisted and gained, else the earlier"""
    data = {
        "verdict": [r.verdict for r in records],
        "earlier_id": [r.earlier.id if r.earlier else None for r in records],
        "later_id": [r.later.id if r.later else None for r in records],
        "distance_m": [r.distance_m for r in records],
        "area_delta_m2": [r.area_delta_m2 for r in records],
        "area_m2": [r.instance.area_m2 for r in records],
        "score": [r.instance.score for r in records],
    }
    geometry = gpd.GeoSeries([Polygon(r.instance.polygon) for r in records], crs=f"EPSG:{crs.WGS84}")
    return gpd.GeoDataFrame(data, geometry=geometry)


def write_changes(records: list[ChangeRecord], path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(changes_frame(records).to_json(drop_id=True) + "\n")
    return path


def report_frame(reports: list[RegionReport]) -> pd.DataFrame:
    return pd.DataFrame([r.row() for r in reports])


def write_report_csv(reports: list[RegionReport], path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    report_frame(reports).to_csv(path, index=False, float_format="%.3f")
    return path


def render_summary(summary: ChangeSummary, reports: list[RegionReport], title: str = None) -> str:
    lines = [
        f"# {title or 'Tree canopy change'}",
        "",
        f"Matching: {summary.strategy}, {summary.criterion}, max distance {summary.max_dist:g} m",
        "",
        "| | count |",
        "|---|---:|",
        f"| earlier epoch | {summary.earlier_count} |",
        f"| later epoch | {summary.later_count} |",
        f"| persisted | {summary.persisted} |",
        f"| lost | {summary.lost} |",
        f"| gained | {summary.gained} |",
        f"| net change | {summary.net_count:+d} |",
        "",
        "## Regions",
        "",
        "| region | earlier | later | persisted | lost | gained | net | earlier area m² | later area m² | net area m² |",
        "|---|---:|---:|---:|---:|---:|---:|---:|---:|---:|",
    ]
    for r in reports:
        lines.append(
            f"| {r.region_id} | {r.earlier_count} | {r.later_count} | {r.persisted} | {r.lost} "
            f"| {r.gained} | {r.net_count:+d} | {r.earlier_area_m2:.1f} | {r.later_area_m2:.1f} "
            f"| {r.net_area_m2:+.1f} |"
        )
    return "\n".join(lines) + "\n"


def write_change_outputs(
    records: list[ChangeRecord],
    reports: list[RegionReport],
    summary: ChangeSummary,
    out_dir: Path | str,
) -> list[Path]:
    """Writes `changes.geojson`, `report.csv` and `summary.md` into `out_dir`"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary_path = out_dir / SUMMARY_NAME
    summary_path.write_text(render_summary(summary, reports))
    return [
        write_changes(records, out_dir / CHANGES_NAME),
        write_report_csv(reports, out_dir / REPORT_NAME),
        summary_path,
    ]
