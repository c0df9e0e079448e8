"""Matrix-free conjugate gradient reference solver for the z-step.

Blur and its adjoint are applied as spatial wrap-around convolution /
correlation, so this path shares no FFT code with :mod:`.zstep`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import convolve, correlate

from ..isp import SITE_CHANNEL, RawImage
from .zstep import GREEN_MODES, _as_rgb_kernel, _check_beta, combine_sites


@dataclass
class CgInfo:
    iterations: int = 0
    residual: float = 0.0
    converged: bool = False
    residuals: list = field(default_factory=list)
    # value of 0.5 v^T A v - b^T v; decreases monotonically for exact CG
    energies: list = field(default_factory=list)


def conjugate_gradient(apply_a, b: np.ndarray, x0: np.ndarray, tol: float = 1e-10,
                       max_iter: int = 1000) -> tuple[np.ndarray, CgInfo]:
    """Solve ``A v = b`` for symmetric positive definite ``A`` given as a callable.

    Stops once ``||b - A v|| <= tol * ||b||``.
    """
    v = x0.copy()
    r = b - apply_a(v)
    p = r.copy()
    rs = float(np.vdot(r, r))
    bnorm = float(np.linalg.norm(b)) or 1.0
    info = CgInfo()

    def energy(v, r):
        # 0.5 v^T A v - b^T v = -0.5 v^T (b + r)
        return -0.5 * float(np.vdot(v, b + r))

    info.residuals.append(np.sqrt(rs) / bnorm)
    info.energies.append(energy(v, r))
    for it in range(1, max_iter + 1):
        if np.sqrt(rs) <= tol * bnorm:
            break
        ap = apply_a(p)
        alpha = rs / float(np.vdot(p, ap))
        v += alpha * p
        r -= alpha * ap
        rs_new = float(np.vdot(r, r))
        p = r + (rs_new / rs) * p
        rs = rs_new
        info.iterations = it
        info.residuals.append(np.sqrt(rs) / bnorm)
        info.energies.append(energy(v, r))
    info.residual = np.sqrt(rs) / bnorm
    info.converged = info.residual <= tol
    return v, info


def _blur(u, k):
    return convolve(u, k, mode="wrap")


def _blur_t(u, k):
    return correlate(u, k, mode="wrap")


def _solve_plane(obs_full, mask, x_plane, k, beta, tol, max_iter):
    """CG on (K^T S K + beta I) z = K^T (mask * obs) + beta x with S = diag(mask)."""
    if mask is None:
        def apply_a(v):
            return _blur_t(_blur(v, k), k) + beta * v
        rhs = _blur_t(obs_full, k) + beta * x_plane
    else:
        m = mask.astype(np.float64)

        def apply_a(v):
            return _blur_t(m * _blur(v, k), k) + beta * v
        rhs = _blur_t(m * obs_full, k) + beta * x_plane
    return conjugate_gradient(apply_a, rhs, x_plane.copy(), tol, max_iter)


def zstep_cg(obs, x: np.ndarray, kernel: np.ndarray, beta: float, tol: float = 1e-10,
             max_iter: int = 2000, green_mode: str = "split"):
    """Reference z-step by conjugate gradient.

    ``obs`` is either an (H, W, 3) image (plain deblurring, sampling = I) or a
    :class:`RawImage` (mosaicked problem, sampling given by its CFA). For raw
    input the per-site problems and green recombination mirror
    :class:`~.zstep.MosaicFftSolver`.

    Returns ``(z, infos)`` with one :class:`CgInfo` per solved sub-problem.
    Non-convergence is reported in the infos, not raised.
    """
    _check_beta(beta)
    x = np.asarray(x, dtype=np.float64)
    kernel = _as_rgb_kernel(kernel)
    infos: dict[str, CgInfo] = {}

    if not isinstance(obs, RawImage):
        d = np.asarray(obs, dtype=np.float64)
        z = np.empty_like(x)
        for c in range(3):
            z[..., c], infos["RGB"[c]] = _solve_plane(d[..., c], None, x[..., c],
                                                      kernel[..., c], beta, tol, max_iter)
        return z, infos

    if green_mode not in GREEN_MODES:
        raise ValueError(f"green_mode must be one of {GREEN_MODES}")
    cfa, shape, plane = obs.cfa, obs.shape, obs.plane
    sites = {"R": cfa.mask("R", shape), "B": cfa.mask("B", shape)}
    if green_mode == "split":
        sites["G1"] = cfa.mask("G1", shape)
        sites["G2"] = cfa.mask("G2", shape)
    else:
        sites["G"] = cfa.mask("G1", shape) | cfa.mask("G2", shape)
    sol = {}
    for label, mask in sites.items():
        c = 1 if label.startswith("G") else SITE_CHANNEL[label]
        sol[label], infos[label] = _solve_plane(plane, mask, x[..., c], kernel[..., c],
                                                beta, tol, max_iter)
    return combine_sites(sol, cfa, shape), infos
