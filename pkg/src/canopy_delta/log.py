import logging

from canopy_delta.config import settings

LOGGER = logging.getLogger("canopy_delta")
LOG_HANDLER = logging.StreamHandler()
LOG_FORMATTER = logging.Formatter(
    "\033[1;32m%(name)s\033[0m:[%(levelname)s]: %(message)s"
)
LOG_HANDLER.setFormatter(LOG_FORMATTER)
LOGGER.addHandler(LOG_HANDLER)
LOGGER.setLevel(logging.DEBUG if settings.debug else logging.WARNING)


def set_level(debug: bool = False, verbose: bool = False) -> None:
    if debug or settings.debug:
        LOGGER.setLevel(logging.DEBUG)
    elif verbose:
        LOGGER.setLevel(logging.INFO)
    else:
        LOGGER.setLevel(logging.WARNING)
