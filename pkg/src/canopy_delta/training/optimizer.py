from dataclasses import dataclass

import numpy as np

from canopy_delta.exceptions import NonFiniteError, ShapeMismatchError
from canopy_delta.training.config import TrainConfig


@dataclass(frozen=True, slots=True)
class SGDParams:
    learning_rate: float
    momentum: float = 0.0
    weight_decay: float = 0.0

    @classmethod
    def from_config(cls, config: TrainConfig) -> "SGDParams":
        return cls(config.learning_rate, config.momentum, config.weight_decay)


@dataclass(frozen=True, slots=True)
class OptimizerState:
    params: np.ndarray
    velocity: np.ndarray = None
    step: int = 0

    def __post_init__(self):
        params = np.array(self.params, dtype=np.float64)
        velocity = (
            np.zeros_like(params)
            if self.velocity is None
            else np.array(self.velocity, dtype=np.float64)
        )
        if velocity.shape != params.shape:
            raise ShapeMismatchError(f"Velocity shape {velocity.shape} differs from {params.shape}")
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "velocity", velocity)


def sgd_step(
    state: OptimizerState, gradient, hyper: SGDParams | TrainConfig
) -> OptimizerState:
    """
    One SGD step with momentum and weight decay:

        v[t+1] = momentum * v[t] - lr * g - weight_decay * lr * p[t]
        p[t+1] = p[t] + v[t+1]

    Raises:
        NonFiniteError: if the gradient has non-finite entries (the step is not taken)
    """
    if isinstance(hyper, TrainConfig):
        hyper = SGDParams.from_config(hyper)

    g = np.asarray(gradient, dtype=np.float64)
    if g.shape != state.params.shape:
        raise ShapeMismatchError(f"Gradient shape {g.shape} differs from {state.params.shape}")
    if not np.all(np.isfinite(g)):
        raise NonFiniteError(f"Non-finite gradient at step {state.step}")

    lr, mu, wd = hyper.learning_rate, hyper.momentum, hyper.weight_decay
    v = mu * state.velocity - lr * g - wd * lr * state.params
    return OptimizerState(params=state.params + v, velocity=v, step=state.step + 1)

