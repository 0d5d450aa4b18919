import os

from dataclasses import dataclass, field


def _get_int(var_name, default) -> int:
    def _get():
        value = os.environ.get(var_name)
        return default if not value else int(value)

    return _get


def _get_boolean(var_name, default) -> bool:
    def _get():
        value = os.environ.get(var_name)
        return default if not value else bool(value.lower() == "true")

    return _get


@dataclass
class Settings:
    jobs: int = field(default_factory=_get_int("CANOPY_DELTA_JOBS", 1))
    """
    Default number of worker processes for subcommands that parallelize (e.g. tiling).

    The `--jobs` flag overrides this. A value of 1 runs everything in-process and always
    reproduces the output of any parallel run exactly.

    Default = 1
    """

    nodata: int = field(default_factory=_get_int("CANOPY_DELTA_NODATA", 0))
    """Sample value written into tile pixels that fall outside the source scene. Recorded in every tile manifest."""

    debug: bool = field(default_factory=_get_boolean("CANOPY_DELTA_DEBUG", False))
    """Global setting for debug mode. When this is enabled, canopy-delta logs debugging information including stage timings"""


settings = Settings()
