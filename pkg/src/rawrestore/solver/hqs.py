"""Half-quadratic splitting for joint and two-stage raw restoration."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..blur import blur_rgb
from ..image import RgbImage, as_array
from ..isp import DEMOSAICKERS, NoiseParams, RawImage, demosaic_bilinear, mosaic
from .prox import ProxOperator, TvProx
from .zstep import MosaicFftSolver, PlainFftSolver

DEFAULT_T = 6
DEFAULT_BETA_MIN = 1e-3
DEFAULT_BETA_MAX = 1.0
# prior weight: lam = gain * (shot + read) + floor. The data term is an
# unweighted squared error, so lam scales with the noise variance.
LAMBDA_NOISE_GAIN = 0.3
LAMBDA_FLOOR = 1e-6


@dataclass(frozen=True)
class HqsSchedule:
    """Per-iteration penalty weights; ``gammas[t] * betas[t] == lam``."""

    betas: tuple
    gammas: tuple
    lam: float

    def __post_init__(self):
        betas = tuple(float(b) for b in self.betas)
        gammas = tuple(float(g) for g in self.gammas)
        if len(betas) < 1 or len(betas) != len(gammas):
            raise ValueError("schedule needs T >= 1 matching betas and gammas")
        if min(betas) <= 0 or min(gammas) <= 0:
            raise ValueError("betas and gammas must be positive")
        for b, g in zip(betas, gammas):
            if abs(b * g - self.lam) > 1e-9 * max(1.0, abs(self.lam)):
                raise ValueError("gammas must equal lam / betas")
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "gammas", gammas)

    @property
    def T(self) -> int:
        return len(self.betas)

    @classmethod
    def constant(cls, beta: float, lam: float, T: int = DEFAULT_T) -> "HqsSchedule":
        return cls((beta,) * T, (lam / beta,) * T, lam)

    def as_dict(self) -> dict:
        return {"T": self.T, "lambda": self.lam, "betas": list(self.betas),
                "gammas": list(self.gammas)}


def default_lambda(noise: NoiseParams) -> float:
    return LAMBDA_NOISE_GAIN * (noise.shot + noise.read) + LAMBDA_FLOOR


def make_schedule(noise: NoiseParams = NoiseParams(), T: int = DEFAULT_T,
                  lam: float | None = None, beta_min: float = DEFAULT_BETA_MIN,
                  beta_max: float = DEFAULT_BETA_MAX) -> HqsSchedule:
    """Log-spaced ascending betas from ``beta_min`` to ``beta_max``."""
    if T < 1:
        raise ValueError("T must be >= 1")
    if not (0 < beta_min <= beta_max):
        raise ValueError("need 0 < beta_min <= beta_max")
    if lam is None:
        lam = default_lambda(noise)
    if lam <= 0:
        raise ValueError("lambda must be positive")
    betas = (beta_min,) if T == 1 else tuple(np.geomspace(beta_min, beta_max, T))
    return HqsSchedule(betas, tuple(lam / b for b in betas), float(lam))


@dataclass(frozen=True)
class JointProblem:
    y: RawImage
    kernel: np.ndarray
    schedule: HqsSchedule

    def __post_init__(self):
        k = np.asarray(self.kernel)
        h, w = self.y.shape
        if k.shape[0] > h or k.shape[1] > w:
            raise ValueError("kernel larger than the image")

    @property
    def cfa(self):
        return self.y.cfa

    @property
    def noise(self) -> NoiseParams:
        return self.y.noise


def joint_objective(y: RawImage, kernel: np.ndarray, z: np.ndarray, x: np.ndarray,
                    beta: float, lam: float, prox: ProxOperator) -> float:
    """``1/2 ||y - M K z||^2 + beta/2 ||z - x||^2 + lam * prior(x)``."""
    resid = mosaic(blur_rgb(z, kernel), y.cfa).plane - y.plane
    return (0.5 * float(np.sum(resid**2)) + 0.5 * beta * float(np.sum((z - x) ** 2))
            + lam * prox.prior(x))


def twostage_objective(d: np.ndarray, kernel: np.ndarray, z: np.ndarray, x: np.ndarray,
                       beta: float, lam: float, prox: ProxOperator) -> float:
    resid = blur_rgb(z, kernel) - d
    return (0.5 * float(np.sum(resid**2)) + 0.5 * beta * float(np.sum((z - x) ** 2))
            + lam * prox.prior(x))


Callback = Callable[[dict], None]


def _run(zstep, prox, schedule, x, objective, callback):
    for t, (beta, gamma) in enumerate(zip(schedule.betas, schedule.gammas)):
        z = zstep(x, beta)
        if callback is not None:
            callback({"iter": t, "half": "z", "beta": beta, "gamma": gamma,
                      "objective": objective(z, x, beta)})
        x = prox(z, gamma)
        if callback is not None:
            callback({"iter": t, "half": "x", "beta": beta, "gamma": gamma,
                      "objective": objective(z, x, beta)})
    return x


def hqs_restore_joint(problem: JointProblem, prox: ProxOperator | None = None,
                      init=None, callback: Callback | None = None,
                      green_mode: str = "joint") -> RgbImage:
    """Joint deblur / demosaick / denoise from the raw observation.

    Starts from ``init`` (bilinear demosaick of ``y`` by default) and
    alternates the mosaicked z-step with the prior's proximal step, T times.
    ``callback`` receives one record per half-step with the HQS objective.

    The default ``green_mode="joint"`` solves green exactly against both
    green sites, so each z-step is the true minimizer and the objective is
    monotone for a fixed beta and an exact prox. ``"split"`` uses the
    two-subproblem copy/average rule, which is cheaper to reason about but
    can raise the objective at small beta.
    """
    prox = prox or TvProx()
    y = problem.y
    x = as_array(init if init is not None else demosaic_bilinear(y)).copy()
    if x.shape[:2] != y.shape:
        raise ValueError(f"init shape {x.shape[:2]} does not match raw {y.shape}")
    solver = MosaicFftSolver(y, problem.kernel, green_mode)

    def objective(z, x, beta):
        return joint_objective(y, problem.kernel, z, x, beta, problem.schedule.lam, prox)

    x = _run(solver, prox, problem.schedule, x, objective, callback)
    return RgbImage(x, "linRGB")


def hqs_restore_twostage(y: RawImage, kernel: np.ndarray, schedule: HqsSchedule,
                         prox: ProxOperator | None = None, demosaicker="bilinear",
                         callback: Callback | None = None) -> RgbImage:
    """Demosaick first, then deblur the demosaicked image with plain z-steps."""
    prox = prox or TvProx()
    if isinstance(demosaicker, str):
        demosaicker = DEMOSAICKERS[demosaicker]
    d = as_array(demosaicker(y))
    solver = PlainFftSolver(d, kernel)

    def objective(z, x, beta):
        return twostage_objective(d, kernel, z, x, beta, schedule.lam, prox)

    x = _run(solver, prox, schedule, d.copy(), objective, callback)
    return RgbImage(x, "linRGB")
