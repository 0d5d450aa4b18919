from dataclasses import dataclass
from typing import Callable

import numpy as np

FD_STEP = 1e-5


def relative_error(a, b) -> np.ndarray:
    """`|a - b| / max(1, |a|, |b|)`, elementwise"""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))


def numeric_gradient(f: Callable[[np.ndarray], float], x, h: float = FD_STEP) -> np.ndarray:
    """Central finite differences of a scalar function"""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat, out = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        up = f(x)
        flat[i] = original - h
        down = f(x)
        flat[i] = original
        out[i] = (up - down) / (2 * h)
    return grad


@dataclass(frozen=True, slots=True)
class GradientCheck:
    analytic: np.ndarray
    numeric: np.ndarray

    @property
    def max_error(self) -> float:
        if self.analytic.size == 0:
            return 0.0
        return float(relative_error(self.analytic, self.numeric).max())

    def passed(self, tolerance: float) -> bool:
        return self.max_error < tolerance


def gradient_check(
    f: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    x,
    h: float = FD_STEP,
) -> GradientCheck:
    """Compares an analytic gradient with central finite differences at `x`"""
    x = np.asarray(x, dtype=np.float64)
    return GradientCheck(
        analytic=np.asarray(grad(x.copy()), dtype=np.float64).reshape(x.shape),
        numeric=numeric_gradient(f, x, h),
    )
