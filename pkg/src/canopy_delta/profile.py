import contextlib
import time

from functools import wraps

from canopy_delta.log import LOGGER


class Timing:
    """Wall time of one timed block, filled in when the block exits"""

    def __init__(self, name: str):
        self.name = name
        self.seconds: float = None


@contextlib.contextmanager
def timer(name: str):
    """Times a block and logs `name = <seconds> sec` at debug level"""
    timing = Timing(name)
    start = time.perf_counter()
    try:
        yield timing
    finally:
        timing.seconds = round(time.perf_counter() - start, 4)
        LOGGER.debug(f"{name} = {timing.seconds} sec")


def profile(func):
    @wraps(func)
    def wrapper(*args, **kwargs):
        with timer(func.__qualname__):
            return func(*args, **kwargs)

    return wrapper
