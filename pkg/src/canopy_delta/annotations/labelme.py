"""
Reader and writer for polygon annotation documents.

The schema is the one written by the LabelMe annotation tool:

```json
{
  "version": "5.2.1",
  "flags": {},
  "shapes": [
    {"label": "tree", "points": [[10, 10], [40, 12], [25, 38]], "group_id": null,
     "shape_type": "polygon", "flags": {}}
  ],
  "imagePath": "18_187421_113902.png",
  "imageData": null,
  "imageHeight": 512,
  "imageWidth": 512
}
```
"""

import json

from pathlib import Path
from typing import Iterable

from pydantic import ValidationError

from canopy_delta.annotations.models import TILE_PIXELS, AnnotationDocument, PolygonAnnotation
from canopy_delta.exceptions import AnnotationParseError, RejectedRecord
from canopy_delta.log import LOGGER

DEFAULT_LABELS = ("tree",)

FORMAT_VERSION = "5.2.1"


def _first_error(e: ValidationError) -> str:
    error = e.errors()[0]
    return str(error["msg"]).removeprefix("Value error, ")


def _load(document) -> tuple[dict, str]:
    if isinstance(document, dict):
        return document, None

    source = None
    if isinstance(document, Path):
        source = str(document)
        document = document.read_text()

    try:
        return json.loads(document), source
    except json.JSONDecodeError as e:
        raise AnnotationParseError(f"Malformed annotation document: {e.msg}", e.lineno, e.colno)


def image_id_from_path(image_path: str) -> str:
    """Image identifier of an image path: its file name without extension"""
    return Path(image_path.replace("\\", "/")).stem


def parse_annotation_file(
    document: str | bytes | dict | Path,
    labels: Iterable[str] | None = DEFAULT_LABELS,
    image_id: str = None,
) -> AnnotationDocument:
    """
    Parses a polygon annotation document.

    Args:
        document: JSON text, a parsed dict or a path to the file
        labels: Labels to keep. `None` keeps every label.
        image_id: Identifier for the image. Defaults to the stem of `imagePath`.

    Returns:
        AnnotationDocument holding one PolygonAnnotation per kept polygon shape. Non-polygon shapes
        are counted in `skipped`; invalid polygons are listed in `rejected`.

    Raises:
        AnnotationParseError: if the document is not JSON or does not follow the schema
    """
    data, source = _load(document)

    if not isinstance(data, dict) or not isinstance(data.get("shapes"), list):
        raise AnnotationParseError("Annotation document must be an object with a 'shapes' list")

    if image_id is None:
        image_path = data.get("imagePath") or (Path(source).stem if source else "")
        image_id = image_id_from_path(image_path)

    width = int(data.get("imageWidth") or TILE_PIXELS)
    height = int(data.get("imageHeight") or TILE_PIXELS)
    keep = None if labels is None else set(labels)

    result = AnnotationDocument(image_id=image_id, image_width=width, image_height=height)

    for i, shape in enumerate(data["shapes"]):
        if not isinstance(shape, dict):
            result.rejected.append(RejectedRecord(i, "shape is not an object", source))
            continue

        shape_type = shape.get("shape_type") or "polygon"
        if shape_type != "polygon":
            result.skipped += 1
            LOGGER.warning(f"{image_id}: skipping {shape_type} shape {i}")
            continue

        label = shape.get("label")
        if keep is not None and label not in keep:
            continue

        points = shape.get("points")
        if not isinstance(points, list) or len(points) < 3:
            count = len(points) if isinstance(points, list) else 0
            result.rejected.append(
                RejectedRecord(i, f"polygon has {count} points, needs at least 3", source)
            )
            continue

        try:
            annotation = PolygonAnnotation(
                label=str(label),
                vertices=[(p[0], p[1]) for p in points],
                image_id=image_id,
                image_width=width,
                image_height=height,
            )
        except (ValidationError, TypeError, IndexError) as e:
            reason = _first_error(e) if isinstance(e, ValidationError) else "malformed points"
            result.rejected.append(RejectedRecord(i, reason, source))
            continue

        result.annotations.append(annotation)

    for record in result.rejected:
        LOGGER.warning(f"{image_id}: rejected {record}")

    return result


def load_annotation_dir(
    path: Path | str, labels: Iterable[str] | None = DEFAULT_LABELS
) -> dict[str, AnnotationDocument]:
    """Parses every `*.json` document in a directory, keyed by image id (sorted)"""
    documents = {}
    for file_path in sorted(Path(path).glob("*.json")):
        doc = parse_annotation_file(file_path, labels=labels)
        documents[doc.image_id] = doc
    return dict(sorted(documents.items()))


def annotation_document(
    image_path: str,
    width: int,
    height: int,
    polygons: Iterable[tuple[str, list[tuple[float, float]]]],
) -> dict:
    """Builds an annotation document from (label, vertices) pairs"""
    return {
        "version": FORMAT_VERSION,
        "flags": {},
        "shapes": [
            {
                "label": label,
                "points": [[float(x), float(y)] for x, y in vertices],
                "group_id": None,
                "shape_type": "polygon",
                "flags": {},
            }
            for label, vertices in polygons
        ],
        "imagePath": image_path,
        "imageData": None,
        "imageHeight": height,
        "imageWidth": width,
    }


def write_annotation_file(path: Path | str, document: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(document, indent=2) + "\n")
    return path
