# ruff: noqa: F401,F403

from .models import ChangeRecord, ChangeSummary, RegionReport, VERDICTS
from .matching import (
    DEFAULT_MAX_DIST,
    match_epochs,
    summarize,
    centroid_distances,
    greedy_assignment,
    optimal_assignment,
)
from .regions import Region, count_trees, contains_points, read_regions, region_report
from .outputs import write_change_outputs, write_changes, write_report_csv, render_summary
