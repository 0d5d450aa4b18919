import math

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from canopy_delta.exceptions import DivergenceError
from canopy_delta.log import LOGGER
from canopy_delta.training.config import TrainConfig
from canopy_delta.training.losses import MaskPair, bce_mask_loss, bce_mask_loss_grad
from canopy_delta.training.optimizer import OptimizerState, SGDParams, sgd_step

DIVERGENCE_LIMIT = 1e12


class ToyProblem(Protocol):
    def initial(self) -> np.ndarray: ...

    def loss(self, p: np.ndarray) -> float: ...

    def gradient(self, p: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class QuadraticBowl:
    """J(p) = 0.5 * |p|^2"""

    start: tuple[float, ...] = (1.0, 1.0)

    def initial(self) -> np.ndarray:
        return np.array(self.start, dtype=np.float64)

    def loss(self, p: np.ndarray) -> float:
        return 0.5 * float(np.dot(p, p))

    def gradient(self, p: np.ndarray) -> np.ndarray:
        return np.array(p, dtype=np.float64)


@dataclass
class MaskLogitProblem:
    """
    Two-class pixel task: each pixel has a feature vector, the model predicts
    `p = sigmoid(features @ w)` and is trained with the mask BCE loss.
    """

    seed: int = 0
    pixels: int = 256
    features: int = 3

    _x: np.ndarray = field(init=False, repr=False)
    _y: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        rng = np.random.default_rng(self.seed)
        self._x = rng.normal(size=(self.pixels, self.features))
        w_true = rng.normal(size=self.features)
        self._y = (self._x @ w_true > 0).astype(np.float64)

    def initial(self) -> np.ndarray:
        return np.zeros(self.features)

    def _pair(self, w: np.ndarray) -> MaskPair:
        return MaskPair(self._y, 1.0 / (1.0 + np.exp(-(self._x @ w))))

    def loss(self, w: np.ndarray) -> float:
        return bce_mask_loss(self._pair(w))

    def gradient(self, w: np.ndarray) -> np.ndarray:
        pair = self._pair(w)
        dp = bce_mask_loss_grad(pair)
        return self._x.T @ (dp * pair.p * (1.0 - pair.p))


@dataclass
class ToyFit:
    losses: list[float]
    """Loss before the first step, then after every step"""

    state: OptimizerState

    @property
    def final_loss(self) -> float:
        return self.losses[-1]


def fit_toy(
    problem: ToyProblem,
    hyper: SGDParams | TrainConfig,
    steps: int,
    divergence_limit: float = DIVERGENCE_LIMIT,
) -> ToyFit:
    """
    Runs `steps` SGD steps on a toy problem.

    Raises:
        DivergenceError: when the loss becomes non-finite or exceeds `divergence_limit`
    """
    state = OptimizerState(problem.initial())
    losses = [problem.loss(state.params)]

    for step in range(1, steps + 1):
        state = sgd_step(state, problem.gradient(state.params), hyper)
        loss = problem.loss(state.params)
        if not math.isfinite(loss) or loss > divergence_limit:
            LOGGER.warning(f"toy fit diverged at step {step}")
            raise DivergenceError(step, loss)
        losses.append(loss)

    return ToyFit(losses=losses, state=state)
