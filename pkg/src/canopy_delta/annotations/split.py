import math

from pathlib import Path
from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from canopy_delta.exceptions import ConfigurationError

DEFAULT_RATIOS = (0.7, 0.2, 0.1)

SPLIT_NAMES = ("train", "val", "test")


class DatasetSplit(BaseModel):
    """Disjoint train/validation/test partition of image identifiers"""

    model_config = ConfigDict(frozen=True)

    train: list[str]
    val: list[str]
    test: list[str]
    seed: int

    @model_validator(mode="after")
    def _check_disjoint(self):
        total = len(self.train) + len(self.val) + len(self.test)
        if len(set(self.train) | set(self.val) | set(self.test)) != total:
            raise ValueError("Split lists are not disjoint")
        return self

    @property
    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.val), len(self.test)

    def write(self, out_dir: Path | str) -> list[Path]:
        """Writes `train.txt`, `val.txt` and `test.txt` with one id per line"""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = []
        for name in SPLIT_NAMES:
            path = out_dir / f"{name}.txt"
            ids = getattr(self, name)
            path.write_text("".join(f"{i}\n" for i in ids))
            paths.append(path)
        return paths


def allocate(n: int, ratios: Sequence[float]) -> tuple[int, ...]:
    """
    Splits `n` items by ratio: floor every share, then hand out the leftover one item at a time
    in order (train first, then val, then test).
    """
    sizes = [math.floor(n * r + 1e-9) for r in ratios]
    leftover = n - sum(sizes)
    i = 0
    while leftover > 0:
        sizes[i % len(sizes)] += 1
        leftover -= 1
        i += 1
    return tuple(sizes)


def split_dataset(
    image_ids: Sequence[str], ratios: Sequence[float] = DEFAULT_RATIOS, seed: int = 0
) -> DatasetSplit:
    """
    Deterministic train/val/test split.

    Ids are sorted, shuffled by a generator seeded with `seed` and cut into contiguous runs, so the
    result depends only on the set of ids and the seed.

    Args:
        image_ids: Image identifiers (must be unique)
        ratios: (train, val, test) ratios summing to 1
        seed: Shuffle seed

    Returns:
        DatasetSplit
    """
    if len(image_ids) == 0:
        raise ConfigurationError("Cannot split an empty list of image ids")
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise ConfigurationError(f"Split ratios must be three non-negative numbers, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigurationError(f"Split ratios must sum to 1, got {sum(ratios)}")

    ids = sorted(str(i) for i in image_ids)
    if len(set(ids)) != len(ids):
        raise ConfigurationError("Image ids must be unique")

    order = np.random.default_rng(seed).permutation(len(ids))
    shuffled = [ids[i] for i in order]

    n_train, n_val, _ = allocate(len(ids), ratios)
    return DatasetSplit(
        train=shuffled[:n_train],
        val=shuffled[n_train : n_train + n_val],
        test=shuffled[n_train + n_val :],
        seed=seed,
    )
