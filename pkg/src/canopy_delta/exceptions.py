"""Error types raised by canopy-delta.

Every error carries a short `category` string. The command line prints it as
`error[<category>]: <message>` so scripts can branch on failures without parsing prose.
"""

from dataclasses import dataclass


class CanopyDeltaError(Exception):
    """Base class for all canopy-delta errors."""

    category = "error"


class DomainError(CanopyDeltaError, ValueError):
    """Input lies outside the mathematical domain of an operation"""

    category = "domain"


class ConfigurationError(CanopyDeltaError, ValueError):
    """Invalid configuration value, geotransform or parameter combination"""

    category = "config"


class RasterReadError(CanopyDeltaError):
    category = "raster-read"


class TileWriteError(CanopyDeltaError):
    category = "tile-write"


class EmptyTilingError(CanopyDeltaError):
    category = "empty-tiling"


class AnnotationParseError(CanopyDeltaError):
    """Annotation document is not well-formed JSON or does not follow the polygon schema"""

    category = "annotation-parse"

    def __init__(self, message: str, line: int = None, column: int = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class DegeneratePolygonError(CanopyDeltaError, ValueError):
    category = "degenerate-polygon"


class DetectionSchemaError(CanopyDeltaError):
    category = "detection-schema"


class ManifestLookupError(CanopyDeltaError, KeyError):
    category = "manifest-lookup"

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class MixedEpochError(CanopyDeltaError, ValueError):
    category = "mixed-epoch"


class MetricError(CanopyDeltaError, ValueError):
    category = "metric"


class ShapeMismatchError(CanopyDeltaError, ValueError):
    category = "shape"


class NonFiniteError(CanopyDeltaError, ValueError):
    category = "non-finite"


class DivergenceError(CanopyDeltaError):
    """Optimization loss became non-finite or exploded"""

    category = "divergence"

    def __init__(self, step: int, loss: float):
        self.step = step
        self.loss = loss
        super().__init__(f"loss diverged at step {step} (loss = {loss})")


class CRSMismatchError(CanopyDeltaError, ValueError):
    category = "crs-mismatch"


class SynthesisError(CanopyDeltaError):
    category = "synthesis"


class MathcheckError(CanopyDeltaError):
    """One or more numerical self-checks failed"""

    category = "mathcheck"


@dataclass(frozen=True)
class RejectedRecord:
    """A single input record that was skipped, with the position it had in its source document"""

    index: int
    reason: str
    source: str = None

    def __str__(self):
        prefix = f"{self.source}: " if self.source else ""
        return f"{prefix}record {self.index}: {self.reason}"
