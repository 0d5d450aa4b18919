import json

from pathlib import Path

import numpy as np
from pydantic import BaseModel

from canopy_delta.exceptions import DivergenceError
from canopy_delta.log import LOGGER
from canopy_delta.profile import profile
from canopy_delta.training.gradcheck import gradient_check
from canopy_delta.training.losses import (
    BoxLossParams,
    MaskPair,
    bce_mask_loss,
    bce_mask_loss_grad,
    box_loss,
    box_loss_grad,
)
from canopy_delta.training.optimizer import OptimizerState, SGDParams, sgd_step
from canopy_delta.training.toy import MaskLogitProblem, QuadraticBowl, fit_toy


class Check(BaseModel):
    name: str
    passed: bool
    observed: float
    tolerance: float
    detail: str = ""


class MathcheckReport(BaseModel):
    seed: int
    checks: list[Check]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self) -> list[str]:
        return [
            f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.observed:.3e} (tolerance {c.tolerance:.0e})"
            + (f"  {c.detail}" if c.detail else "")
            for c in self.checks
        ]

    def write(self, path: Path | str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.model_dump(), indent=2) + "\n")
        return path


def _check(name: str, observed: float, tolerance: float, detail: str = "") -> Check:
    return Check(
        name=name, passed=bool(observed < tolerance), observed=float(observed), tolerance=tolerance, detail=detail
    )


def random_box_problem(rng: np.random.Generator):
    s = int(rng.integers(1, 4))
    b = int(rng.integers(1, 3))
    params = BoxLossParams(
        grid_size=s,
        anchors_per_cell=b,
        obj=rng.integers(0, 2, size=s * s * b),
        lambda_coord=float(rng.uniform(0.5, 5)),
        lambda_x=float(rng.uniform(0, 2)),
        lambda_y=float(rng.uniform(0, 2)),
        lambda_w=float(rng.uniform(0, 2)),
        lambda_h=float(rng.uniform(0, 2)),
    )
    prediction = rng.normal(size=(s * s * b, 4))
    target = rng.normal(size=(s * s * b, 4))
    return params, prediction, target


def random_mask_pair(rng: np.random.Generator, n: int = 32) -> tuple[np.ndarray, np.ndarray]:
    return rng.integers(0, 2, size=n).astype(np.float64), rng.uniform(0.05, 0.95, size=n)


def _box_gradients(rng, instances: int, variant: str) -> float:
    worst = 0.0
    for _ in range(instances):
        params, t, b = random_box_problem(rng)
        check = gradient_check(
            lambda x: box_loss(params, x, b, variant=variant),
            lambda x: box_loss_grad(params, x, b, variant=variant),
            t,
        )
        worst = max(worst, check.max_error)
    return worst


def _mask_gradients(rng, instances: int) -> float:
    worst = 0.0
    for _ in range(instances):
        y, p = random_mask_pair(rng)
        check = gradient_check(
            lambda x: bce_mask_loss(MaskPair(y, x)),
            lambda x: bce_mask_loss_grad(MaskPair(y, x)),
            p,
        )
        worst = max(worst, check.max_error)
    return worst


@profile
def run_mathcheck(seed: int = 0, instances: int = 100) -> MathcheckReport:
    """Runs the gradient checks, optimizer identities and toy convergence runs"""
    rng = np.random.default_rng(seed)
    checks = [
        _check("box_loss gradient (squared)", _box_gradients(rng, instances, "squared"), 1e-5),
        _check("box_loss gradient (smooth-L1)", _box_gradients(rng, instances, "smooth_l1"), 1e-4),
        _check("bce_mask_loss gradient", _mask_gradients(rng, instances), 1e-6),
    ]

    state = sgd_step(OptimizerState(np.array([1.0]), np.array([0.0])), [2.0], SGDParams(0.01, 0.938, 0.0005))
    error = max(abs(state.velocity[0] - (-0.020005)), abs(state.params[0] - 0.979995))
    checks.append(_check("sgd_step momentum example", error, 1e-15))

    p = rng.normal(size=8)
    g = rng.normal(size=8)
    plain = p - 0.1 * g
    stepped = sgd_step(OptimizerState(p), g, SGDParams(0.1)).params
    checks.append(
        _check("sgd_step reduces to gradient descent", float(np.max(np.abs(stepped - plain))), 1e-300)
    )

    fit = fit_toy(QuadraticBowl(), SGDParams(0.1), 200)
    checks.append(_check("quadratic bowl, plain descent, 200 steps", float(np.linalg.norm(fit.state.params)), 1e-8))

    fit = fit_toy(QuadraticBowl(), SGDParams(0.1, 0.938), 2000)
    checks.append(_check("quadratic bowl, momentum 0.938, 2000 steps", float(np.linalg.norm(fit.state.params)), 1e-3))

    try:
        fit_toy(QuadraticBowl(), SGDParams(2.5), 500)
        checks.append(_check("divergence above the stability bound", 1.0, 0.5, "not detected"))
    except DivergenceError as e:
        checks.append(_check("divergence above the stability bound", 0.0, 0.5, f"step {e.step}"))

    fit = fit_toy(MaskLogitProblem(seed=seed), SGDParams(0.5, 0.9), 300)
    checks.append(
        _check(
            "mask-logit loss decreases",
            fit.final_loss / fit.losses[0],
            0.5,
            f"{fit.losses[0]:.4f} -> {fit.final_loss:.4f}",
        )
    )

    report = MathcheckReport(seed=seed, checks=checks)
    for line in report.lines():
        LOGGER.info(line)
    return report
