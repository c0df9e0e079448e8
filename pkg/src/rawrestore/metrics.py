"""PSNR / SSIM on border-cropped images."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .image import RgbImage, as_array

PSNR_CAP = 99.0
DEFAULT_CROP = 50

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class MetricReport:
    psnr: float
    ssim: float
    border_crop: int
    colorspace: str = "linRGB"

    def as_dict(self) -> dict:
        return {"psnr": self.psnr, "ssim": self.ssim,
                "border_crop": self.border_crop, "colorspace": self.colorspace}


def _pair(a, b, crop: int) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(a, RgbImage) and isinstance(b, RgbImage) and a.colorspace != b.colorspace:
        raise ValueError(f"color space mismatch: {a.colorspace} vs {b.colorspace}")
    x, y = as_array(a), as_array(b)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    h, w = x.shape[:2]
    if crop < 0 or 2 * crop >= min(h, w):
        raise ValueError(f"crop {crop} too large for {h}x{w} image")
    if crop:
        x = x[crop:h - crop, crop:w - crop]
        y = y[crop:h - crop, crop:w - crop]
    return x, y


def psnr(a, b, crop: int = DEFAULT_CROP) -> float:
    """Peak signal-to-noise ratio (peak 1.0) over the cropped interior.

    Identical inputs return ``PSNR_CAP`` instead of infinity.
    """
    x, y = _pair(a, b, crop)
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    t = np.arange(size) - (size - 1) / 2
    g = np.exp(-(t**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    r = len(win) // 2
    out = correlate1d(img, win, axis=0, mode="reflect")
    out = correlate1d(out, win, axis=1, mode="reflect")
    return out[r:img.shape[0] - r, r:img.shape[1] - r]


def _ssim_plane(x: np.ndarray, y: np.ndarray, win: np.ndarray) -> float:
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    mx = _filter_valid(x, win)
    my = _filter_valid(y, win)
    sxx = _filter_valid(x * x, win) - mx * mx
    syy = _filter_valid(y * y, win) - my * my
    sxy = _filter_valid(x * y, win) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def ssim(a, b, crop: int = DEFAULT_CROP) -> float:
    """Single-scale SSIM (11x11 Gaussian window, sigma 1.5), channel mean.

    Statistics are taken over window positions fully inside the cropped
    region; data range is 1.0.
    """
    x, y = _pair(a, b, crop)
    if min(x.shape[:2]) < SSIM_WINDOW:
        raise ValueError("image smaller than the SSIM window after cropping")
    win = _gaussian_window()
    if x.ndim == 2:
        return _ssim_plane(x, y, win)
    return float(np.mean([_ssim_plane(x[..., c], y[..., c], win) for c in range(x.shape[2])]))


def evaluate(restored, reference, crop: int = DEFAULT_CROP) -> MetricReport:
    space = reference.colorspace if isinstance(reference, RgbImage) else "linRGB"
    return MetricReport(psnr(restored, reference, crop), ssim(restored, reference, crop), crop, space)
