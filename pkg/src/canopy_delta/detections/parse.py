import json

from dataclasses import dataclass, field
from pathlib import Path

from pydantic import ValidationError

from canopy_delta.detections.models import Detection
from canopy_delta.exceptions import DetectionSchemaError, RejectedRecord
from canopy_delta.log import LOGGER


@dataclass
class DetectionResults:
    """Detections parsed from one results file"""

    detections: list[Detection] = field(default_factory=list)
    rejected: list[RejectedRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.detections)

    def __iter__(self):
        return iter(self.detections)

    def __getitem__(self, i):
        return self.detections[i]

    def by_tile(self) -> dict[str, list[Detection]]:
        """Detections grouped by tile id, preserving file order inside each tile"""
        grouped = {}
        for d in self.detections:
            grouped.setdefault(d.tile, []).append(d)
        return grouped


def _reason(e: ValidationError) -> str:
    error = e.errors()[0]
    location = ".".join(str(p) for p in error["loc"])
    message = str(error["msg"]).removeprefix("Value error, ")
    return f"{message} ({location})" if location else message


def parse_detections(document: str | bytes | list | Path) -> DetectionResults:
    """
    Parses a detection results file.

    The file is a JSON array of records:

    ```json
    [{"tile": "18/187421/113902", "label": "tree", "score": 0.91,
      "bbox": [10, 12, 30, 28], "polygon": [[10, 20], [25, 12], [40, 22], [30, 40]]}]
    ```

    Records that break a Detection invariant are reported in `rejected` with their index; the
    rest are returned.

    Raises:
        DetectionSchemaError: if the document is not a JSON array
    """
    source = None
    if isinstance(document, Path):
        source = str(document)
        document = document.read_text()

    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as e:
            raise DetectionSchemaError(
                f"Detection results are not valid JSON: {e.msg} (line {e.lineno}, column {e.colno})"
            )

    if not isinstance(document, list):
        raise DetectionSchemaError("Detection results must be a JSON array of records")

    results = DetectionResults()
    for i, record in enumerate(document):
        if not isinstance(record, dict):
            results.rejected.append(RejectedRecord(i, "record is not an object", source))
            continue
        try:
            results.detections.append(Detection.model_validate(record))
        except ValidationError as e:
            results.rejected.append(RejectedRecord(i, _reason(e), source))

    for record in results.rejected:
        LOGGER.warning(f"rejected detection {record}")

    return results


def write_detections(detections, path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps([d.to_record() for d in detections], indent=1) + "\n")
    return path
