from typing import Literal

from pydantic import BaseModel, ConfigDict, model_validator

from canopy_delta.detections.models import TreeInstance

Verdict = Literal["persisted", "gained", "lost"]

VERDICTS: tuple[Verdict, ...] = ("persisted", "lost", "gained")


class ChangeRecord(BaseModel):
    """Fate of one tree between two epochs"""

    model_config = ConfigDict(frozen=True)

    verdict: Verdict
    earlier: TreeInstance | None = None
    later: TreeInstance | None = None

    distance_m: float | None = None
    """Projected centroid distance of a persisted pair"""

    iou: float | None = None
    """Outline IoU of a persisted pair, when matched by IoU"""

    @model_validator(mode="after")
    def _check_references(self):
        if self.verdict == "persisted":
            if self.earlier is None or self.later is None:
                raise ValueError("a persisted record references one instance of each epoch")
            if self.earlier.epoch == self.later.epoch:
                raise ValueError("a persisted record must pair instances from different epochs")
        elif self.verdict == "gained":
            if self.earlier is not None or self.later is None:
                raise ValueError("a gained record references only the later instance")
        elif self.earlier is None or self.later is not None:
            raise ValueError("a lost record references only the earlier instance")
        return self

    @property
    def instance(self) -> TreeInstance:
        """The instance this record is attributed by: later for persisted and gained, else earlier"""
        return self.later if self.later is not None else self.earlier

    @property
    def area_delta_m2(self) -> float | None:
        if self.verdict != "persisted":
            return None
        return self.later.area_m2 - self.earlier.area_m2


class ChangeSummary(BaseModel):
    """Scene-level change totals"""

    earlier_count: int
    later_count: int
    persisted: int
    gained: int
    lost: int
    strategy: str
    criterion: str
    max_dist: float

    @model_validator(mode="after")
    def _check_conservation(self):
        if self.persisted + self.lost != self.earlier_count:
            raise ValueError("persisted + lost does not equal the earlier count")
        if self.persisted + self.gained != self.later_count:
            raise ValueError("persisted + gained does not equal the later count")
        return self

    @property
    def net_count(self) -> int:
        return self.later_count - self.earlier_count


class RegionReport(BaseModel):
    """Per-epoch counts, canopy areas and change counts inside one region"""

    region_id: str
    polygon: list[tuple[float, float]] | None = None
    """Region exterior ring in lon/lat; None for the whole scene"""

    earlier_count: int = 0
    later_count: int = 0
    earlier_area_m2: float = 0.0
    later_area_m2: float = 0.0
    persisted: int = 0
    gained: int = 0
    lost: int = 0

    @model_validator(mode="after")
    def _check_conservation(self):
        if self.persisted + self.lost != self.earlier_count:
            raise ValueError(f"region {self.region_id}: persisted + lost != earlier count")
        if self.persisted + self.gained != self.later_count:
            raise ValueError(f"region {self.region_id}: persisted + gained != later count")
        return self

    @property
    def net_count(self) -> int:
        return self.later_count - self.earlier_count

    @property
    def net_area_m2(self) -> float:
        return self.later_area_m2 - self.earlier_area_m2

    def row(self) -> dict:
        return {
            "region": self.region_id,
            "earlier_count": self.earlier_count,
            "later_count": self.later_count,
            "persisted": self.persisted,
            "gained": self.gained,
            "lost": self.lost,
            "net_count": self.net_count,
            "earlier_area_m2": round(self.earlier_area_m2, 3),
            "later_area_m2": round(self.later_area_m2, 3),
            "net_area_m2": round(self.net_area_m2, 3),
        }
