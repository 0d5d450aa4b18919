from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from canopy_delta.exceptions import ConfigurationError

ALLOWED_VALUES = {
    "learning_rate": (0.01, 0.03),
    "epochs": (500,),
    "batch_size": (16, 32),
    "momentum": (0.938,),
    "weight_decay": (0.0005, 0.001),
    "mask_ratio": (0.4,),
    "anchors_per_image": (4, 8),
}
"""Hyperparameter values used for the reference training runs"""


class TrainConfig(BaseModel):
    """
    Training hyperparameters.

    Values are checked against `ALLOWED_VALUES` unless `allow_override` is set, in which case any
    positive value is accepted. `mask_ratio` and `anchors_per_image` are carried for completeness;
    none of the numerical kernels consume them.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    learning_rate: float = Field(default=0.01, gt=0)
    epochs: int = Field(default=500, gt=0)
    batch_size: int = Field(default=16, gt=0)
    momentum: float = Field(default=0.938, gt=0, lt=1)
    weight_decay: float = Field(default=0.0005, gt=0)
    optimizer: Literal["SGD"] = "SGD"
    mask_ratio: float = Field(default=0.4, gt=0, le=1)
    anchors_per_image: int = Field(default=4, gt=0)
    allow_override: bool = False

    @model_validator(mode="after")
    def _check_allowed(self):
        if self.allow_override:
            return self
        for name, allowed in ALLOWED_VALUES.items():
            value = getattr(self, name)
            if not any(abs(value - a) <= 1e-12 for a in allowed):
                raise ValueError(
                    f"{name} = {value} is not one of {list(allowed)} (set allow_override to use it)"
                )
        return self

    @classmethod
    def from_yaml(cls, source: str | Path) -> "TrainConfig":
        text = Path(source).read_text() if isinstance(source, Path) else source
        data = yaml.safe_load(text) or {}
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            raise ConfigurationError(f"Invalid training config: {e}")

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.model_dump(), sort_keys=False)
