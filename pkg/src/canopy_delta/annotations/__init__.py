# ruff: noqa: F401,F403

from .models import PolygonAnnotation, InstanceMask, AnnotationDocument
from .labelme import (
    parse_annotation_file,
    load_annotation_dir,
    annotation_document,
    write_annotation_file,
)
from .rasterize import rasterize, polygon_to_mask, export_mask_png
from .split import DatasetSplit, split_dataset, allocate
