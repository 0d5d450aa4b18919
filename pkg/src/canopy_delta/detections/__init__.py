# ruff: noqa: F401,F403

from .models import Detection, TreeInstance
from .parse import DetectionResults, parse_detections, write_detections
from .georeference import georeference
from .assemble import assemble_scene, geo_iou, merge_instances, seam_overlap, union_area
from .ingest import IngestReport, ingest_detections
from .geojson import instances_frame, read_instances, write_instances
