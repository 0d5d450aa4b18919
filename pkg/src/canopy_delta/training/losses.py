"""
Loss kernels for box regression and mask segmentation.

Box tensors have one row per (cell, anchor) slot of an S x S grid with B anchors per cell, and four
columns (x, y, w, h). Any shape whose last axis is 4 and which holds S*S*B rows is accepted.
"""

from dataclasses import dataclass
from typing import Literal

import numpy as np

from canopy_delta.exceptions import NonFiniteError, ShapeMismatchError

EPSILON = 1e-7
"""Probability clamp for the mask loss"""

BoxLossVariant = Literal["squared", "smooth_l1"]


@dataclass(frozen=True, slots=True, kw_only=True)
class BoxLossParams:
    grid_size: int
    """Grid cells per side (S)"""

    anchors_per_cell: int
    """Anchors per cell (B)"""

    obj: np.ndarray
    """Responsibility indicator per (cell, anchor), S*S*B entries of 0 or 1"""

    lambda_coord: float = 1.0
    lambda_x: float = 1.0
    lambda_y: float = 1.0
    lambda_w: float = 1.0
    lambda_h: float = 1.0

    def __post_init__(self):
        if self.grid_size < 1 or self.anchors_per_cell < 1:
            raise ShapeMismatchError("grid_size and anchors_per_cell must be at least 1")
        obj = np.asarray(self.obj, dtype=np.float64).ravel()
        if obj.size != self.slots:
            raise ShapeMismatchError(f"obj has {obj.size} entries, expected {self.slots}")
        if not np.all((obj == 0) | (obj == 1)):
            raise ValueError("obj entries must be 0 or 1")
        if min(self.lambda_coord, *self.coordinate_weights) < 0:
            raise ValueError("Loss coefficients must be non-negative")
        object.__setattr__(self, "obj", obj)

    @property
    def slots(self) -> int:
        return self.grid_size * self.grid_size * self.anchors_per_cell

    @property
    def coordinate_weights(self) -> np.ndarray:
        return np.array([self.lambda_x, self.lambda_y, self.lambda_w, self.lambda_h])


def _box_arrays(params: BoxLossParams, prediction, target) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(prediction, dtype=np.float64)
    b = np.asarray(target, dtype=np.float64)
    if t.shape != b.shape:
        raise ShapeMismatchError(f"Prediction shape {t.shape} differs from target shape {b.shape}")
    if t.size != params.slots * 4:
        raise ShapeMismatchError(f"Expected {params.slots} x 4 box values, got shape {t.shape}")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(b))):
        raise NonFiniteError("Box prediction or target contains non-finite values")
    return t.reshape(-1, 4), b.reshape(-1, 4)


def smooth_l1(d: np.ndarray, beta: float = 1.0) -> np.ndarray:
    d = np.abs(d)
    return np.where(d < beta, 0.5 * d * d / beta, d - 0.5 * beta)


def box_loss(
    params: BoxLossParams,
    prediction,
    target,
    variant: BoxLossVariant = "squared",
    beta: float = 1.0,
) -> float:
    """
    Box regression loss:

    `lambda_coord * sum_ij obj_ij * sum_k lambda_k * rho(t_k - b_k)` for k in (x, y, w, h), with
    `rho(d) = d^2` (default) or smooth-L1 with transition point `beta`.
    """
    t, b = _box_arrays(params, prediction, target)
    d = t - b
    rho = d * d if variant == "squared" else smooth_l1(d, beta)
    per_slot = rho @ params.coordinate_weights
    return float(params.lambda_coord * np.sum(params.obj * per_slot))


def box_loss_grad(
    params: BoxLossParams,
    prediction,
    target,
    variant: BoxLossVariant = "squared",
    beta: float = 1.0,
) -> np.ndarray:
    """Gradient of `box_loss` with respect to the prediction, in the prediction's shape"""
    t, b = _box_arrays(params, prediction, target)
    d = t - b
    if variant == "squared":
        drho = 2.0 * d
    else:
        drho = np.where(np.abs(d) < beta, d / beta, np.sign(d))
    grad = params.lambda_coord * params.obj[:, None] * params.coordinate_weights[None, :] * drho
    return grad.reshape(np.shape(prediction))


@dataclass(frozen=True, slots=True)
class MaskPair:
    """Ground-truth pixels and predicted probabilities (clamped to [eps, 1 - eps])"""

    y: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64).ravel()
        p = np.asarray(self.p, dtype=np.float64).ravel()
        if y.shape != p.shape:
            raise ShapeMismatchError(f"Mask lengths differ: {y.size} vs {p.size}")
        if y.size == 0:
            raise ShapeMismatchError("Mask loss needs at least one pixel")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(p))):
            raise NonFiniteError("Mask pair contains non-finite values")
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("Ground-truth mask values must be 0 or 1")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "p", np.clip(p, EPSILON, 1.0 - EPSILON))

    def __len__(self):
        return self.y.size


def bce_mask_loss(pair: MaskPair) -> float:
    """Pixel-wise binary cross-entropy, averaged over the N pixels"""
    y, p = pair.y, pair.p
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def bce_mask_loss_grad(pair: MaskPair) -> np.ndarray:
    """Gradient of `bce_mask_loss` with respect to the (clamped) probabilities"""
    y, p = pair.y, pair.p
    return -(y / p - (1.0 - y) / (1.0 - p)) / len(pair)
