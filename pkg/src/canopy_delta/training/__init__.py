# ruff: noqa: F401,F403

from .config import TrainConfig, ALLOWED_VALUES
from .losses import (
    BoxLossParams,
    MaskPair,
    box_loss,
    box_loss_grad,
    bce_mask_loss,
    bce_mask_loss_grad,
    smooth_l1,
)
from .optimizer import OptimizerState, SGDParams, sgd_step
from .gradcheck import gradient_check, numeric_gradient, relative_error
from .toy import QuadraticBowl, MaskLogitProblem, ToyFit, fit_toy
from .mathcheck import MathcheckReport, run_mathcheck
