import numpy as np


def percentile_limits(samples: np.ndarray, low_pct: float, high_pct: float) -> tuple[float, float]:
    """Returns the sample values at the low and high percentiles"""
    if samples.size == 0:
        raise ValueError("Cannot stretch an empty grid")
    if not (0 <= low_pct < high_pct <= 100):
        raise ValueError(
            f"Percentiles must satisfy 0 <= low < high <= 100, got {low_pct}, {high_pct}"
        )
    low, high = np.percentile(samples, [low_pct, high_pct])
    return float(low), float(high)


def apply_stretch(samples: np.ndarray, low: float, high: float) -> np.ndarray:
    """
    Linearly maps [low, high] onto [0, 255], clipping outside values.

    A degenerate range (high <= low) maps everything to 0.
    """
    if high <= low:
        return np.zeros(samples.shape, dtype=np.uint8)

    scaled = (samples.astype(np.float64) - low) / (high - low)
    scaled = np.clip(scaled, 0.0, 1.0)
    return np.floor(scaled * 255 + 0.5).astype(np.uint8)


def stretch_to_8bit(samples: np.ndarray, low_pct: float = 2, high_pct: float = 98) -> np.ndarray:
    """
    Percentile stretch of a sample grid (typically 16-bit) to 8-bit.

    Samples at or below the `low_pct` percentile become 0, samples at or above the `high_pct`
    percentile become 255, everything in between is mapped linearly. The mapping is monotone
    non-decreasing. Constant grids map to all zeros.

    Args:
        samples: Grid of samples
        low_pct: Low percentile (0...100)
        high_pct: High percentile (0...100), greater than `low_pct`

    Returns:
        uint8 grid of the same shape
    """
    low, high = percentile_limits(samples, low_pct, high_pct)
    return apply_stretch(samples, low, high)
