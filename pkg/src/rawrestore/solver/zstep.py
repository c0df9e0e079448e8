"""Closed-form frequency-domain solvers for the HQS data sub-problem.

Plain case, per channel::

    argmin_z ||d - K z||^2 + beta ||z - x||^2

Mosaicked case, per CFA site ``c`` in {R, G1, G2, B}::

    (K_c^T D_c^T D_c K_c + beta I) z_c = K_c^T D_c^T y + beta x_c

where ``D_c`` keeps one pixel of every 2x2 cell. With circular boundaries,
``D_c^T D_c`` is a mask whose spectrum folds each frequency onto its
aliases, so by the Woodbury identity::

    z_hat = (r_hat - conj(K_hat) * A[K_hat r_hat] / (A[|K_hat|^2] + beta)) / beta

with ``r = K^T D^T y + beta x`` and ``A`` the mean over the four aliases
``k + (a H/2, b W/2)``. A nonzero site offset is removed by cyclically shifting
the problem so the site lands on (0, 0).
"""

from __future__ import annotations

import numpy as np

from ..blur import kernel_otf
from ..isp import SITE_CHANNEL, CfaPattern, RawImage

GREEN_MODES = ("split", "joint")


def _as_rgb_kernel(kernel: np.ndarray) -> np.ndarray:
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim == 2:
        kernel = np.repeat(kernel[..., None], 3, axis=2)
    return kernel


def _check_beta(beta: float) -> None:
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")


def _alias_mean(f: np.ndarray, lattice: str) -> np.ndarray:
    """Average a full-size spectrum over the aliases of a 2x-decimation lattice.

    ``rect`` keeps one pixel per 2x2 cell (4 aliases); ``quincunx`` keeps the
    checkerboard (2 aliases).
    """
    h, w = f.shape[:2]
    if lattice == "rect":
        g = f + np.roll(f, h // 2, axis=0)
        return 0.25 * (g + np.roll(g, w // 2, axis=1))
    return 0.5 * (f + np.roll(f, (h // 2, w // 2), axis=(0, 1)))


def _shift_phase(shape: tuple[int, int], offset: tuple[int, int]) -> np.ndarray:
    """Spectrum multiplier implementing ``np.roll(u, (-oy, -ox))``."""
    h, w = shape
    oy, ox = offset
    py = np.exp(2j * np.pi * oy * np.fft.fftfreq(h))
    px = np.exp(2j * np.pi * ox * np.fft.fftfreq(w))
    return py[:, None] * px[None, :]


def zstep_plain_fft(d: np.ndarray, x: np.ndarray, kernel: np.ndarray, beta: float) -> np.ndarray:
    """Exact per-channel minimizer of ``||d - K z||^2 + beta ||z - x||^2``."""
    _check_beta(beta)
    d = np.asarray(d, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    otf = kernel_otf(_as_rgb_kernel(kernel), d.shape[:2])
    num = np.conj(otf) * np.fft.fft2(d, axes=(0, 1)) + beta * np.fft.fft2(x, axes=(0, 1))
    return np.real(np.fft.ifft2(num / (np.abs(otf) ** 2 + beta), axes=(0, 1)))


class PlainFftSolver:
    """Plain z-step with the kernel and observation spectra cached across
    HQS iterations."""

    def __init__(self, d: np.ndarray, kernel: np.ndarray):
        d = np.asarray(d, dtype=np.float64)
        self.shape = d.shape[:2]
        self.otf = kernel_otf(_as_rgb_kernel(kernel), self.shape)
        self.otf2 = np.abs(self.otf) ** 2
        self.ktd = np.conj(self.otf) * np.fft.fft2(d, axes=(0, 1))

    def __call__(self, x: np.ndarray, beta: float) -> np.ndarray:
        _check_beta(beta)
        num = self.ktd + beta * np.fft.fft2(x, axes=(0, 1))
        return np.real(np.fft.ifft2(num / (self.otf2 + beta), axes=(0, 1)))


class MosaicFftSolver:
    """Mosaicked z-step for one raw observation and RGB kernel.

    Everything that does not depend on ``x`` or ``beta`` (kernel spectra,
    alias-folded kernel power, back-projected data) is computed once here.

    ``green_mode="split"`` solves G1 and G2 as separate decimated problems
    and recombines them: each sampled green site copies its own sub-solution,
    red/blue sites take the average. ``green_mode="joint"`` instead solves the
    green channel exactly against both green sites (checkerboard lattice).
    """

    def __init__(self, y: RawImage, kernel: np.ndarray, green_mode: str = "split"):
        if green_mode not in GREEN_MODES:
            raise ValueError(f"green_mode must be one of {GREEN_MODES}")
        h, w = y.shape
        if h % 2 or w % 2:
            raise ValueError("mosaicked z-step needs even dimensions")
        self.shape = (h, w)
        self.cfa = y.cfa
        self.green_mode = green_mode
        otf = kernel_otf(_as_rgb_kernel(kernel), self.shape)
        self.otf = [otf[..., c] for c in range(3)]
        power = [np.abs(o) ** 2 for o in self.otf]

        plane = y.plane
        # (label, channel, offset, lattice, masked data)
        subproblems = []
        for site in ("R", "B"):
            subproblems.append((site, SITE_CHANNEL[site], self.cfa.offsets[site], "rect",
                                plane * self.cfa.mask(site, self.shape)))
        if green_mode == "split":
            for site in ("G1", "G2"):
                subproblems.append((site, 1, self.cfa.offsets[site], "rect",
                                    plane * self.cfa.mask(site, self.shape)))
        else:
            gmask = self.cfa.mask("G1", self.shape) | self.cfa.mask("G2", self.shape)
            # checkerboard through G1: shifting by G1's offset puts green on i + j even
            subproblems.append(("G", 1, self.cfa.offsets["G1"], "quincunx", plane * gmask))

        self._sub = {}
        for label, c, offset, lattice, masked in subproblems:
            phase = _shift_phase(self.shape, offset)
            ktd = np.conj(self.otf[c]) * np.fft.fft2(masked)
            self._sub[label] = {
                "channel": c,
                "lattice": lattice,
                "phase": phase,
                "ktd": ktd,
                "folded": _alias_mean(power[c], lattice),
            }

    def solve_site(self, label: str, x_plane: np.ndarray, beta: float) -> np.ndarray:
        """Solve one per-site least-squares problem; returns a full-size plane."""
        _check_beta(beta)
        sub = self._sub[label]
        otf = self.otf[sub["channel"]]
        phase = sub["phase"]
        r_hat = sub["ktd"] + beta * np.fft.fft2(x_plane)
        # shift so the sampling lattice passes through the origin
        r_hat = r_hat * phase
        folded = _alias_mean(otf * r_hat, sub["lattice"]) / (sub["folded"] + beta)
        z_hat = (r_hat - np.conj(otf) * folded) / beta
        return np.real(np.fft.ifft2(z_hat * np.conj(phase)))

    def solve_sites(self, x: np.ndarray, beta: float) -> dict[str, np.ndarray]:
        x = np.asarray(x, dtype=np.float64)
        return {label: self.solve_site(label, x[..., sub["channel"]], beta)
                for label, sub in self._sub.items()}

    def __call__(self, x: np.ndarray, beta: float) -> np.ndarray:
        return combine_sites(self.solve_sites(x, beta), self.cfa, self.shape)


def combine_sites(sol: dict[str, np.ndarray], cfa: CfaPattern,
                  shape: tuple[int, int]) -> np.ndarray:
    """Stack per-site solutions into an RGB image.

    With split greens: G1 sites take z_G1, G2 sites take z_G2 and all other
    sites take (z_G1 + z_G2) / 2.
    """
    z = np.empty(tuple(shape) + (3,))
    z[..., 0] = sol["R"]
    z[..., 2] = sol["B"]
    if "G" in sol:
        z[..., 1] = sol["G"]
        return z
    g1, g2 = sol["G1"], sol["G2"]
    green = (g1 + g2) / 2
    m1 = cfa.mask("G1", shape)
    m2 = cfa.mask("G2", shape)
    green[m1] = g1[m1]
    green[m2] = g2[m2]
    z[..., 1] = green
    return z


def zstep_mosaic_fft(y: RawImage, x: np.ndarray, kernel: np.ndarray, beta: float,
                     green_mode: str = "split") -> np.ndarray:
    """Closed-form solution of the mosaicked data sub-problem, (H, W, 3)."""
    _check_beta(beta)
    return MosaicFftSolver(y, kernel, green_mode)(x, beta)
