"""Simplified invertible camera pipeline, Bayer sampling, sensor noise and
classical demosaicking."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import convolve, correlate

from .image import RgbImage, check_plane

SITES = ("R", "G1", "G2", "B")
# channel index of each CFA site in an (H, W, 3) image
SITE_CHANNEL = {"R": 0, "G1": 1, "G2": 1, "B": 2}

SHOT_RANGE = (1e-4, 3e-3)
READ_SLOPE = 2.18
READ_INTERCEPT = 1.20


# ---------------------------------------------------------------------------
# CFA geometry
# ---------------------------------------------------------------------------

def _pattern_offsets(name: str) -> dict[str, tuple[int, int]]:
    name = name.upper()
    if sorted(name) != sorted("RGGB") or len(name) != 4:
        raise ValueError(f"unknown CFA pattern {name!r}")
    cells = [(0, 0), (0, 1), (1, 0), (1, 1)]
    offsets: dict[str, tuple[int, int]] = {}
    greens = []
    for letter, cell in zip(name, cells):
        if letter == "G":
            greens.append(cell)
        else:
            offsets[letter] = cell
    # G1 is the green sharing a row with red
    red_row = offsets["R"][0]
    g1, g2 = sorted(greens, key=lambda c: c[0] != red_row)
    offsets["G1"], offsets["G2"] = g1, g2
    return offsets


@dataclass(frozen=True)
class CfaPattern:
    """A 2x2 Bayer tile. ``offsets`` maps R, G1, G2, B to (row, col)."""

    name: str = "RGGB"
    offsets: dict = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "name", self.name.upper())
        offsets = dict(self.offsets) if self.offsets else _pattern_offsets(self.name)
        if set(offsets) != set(SITES):
            raise ValueError(f"CFA offsets must name {SITES}")
        cells = sorted(tuple(v) for v in offsets.values())
        if cells != [(0, 0), (0, 1), (1, 0), (1, 1)]:
            raise ValueError("CFA offsets must tile the 2x2 cell")
        g1, g2 = offsets["G1"], offsets["G2"]
        if g1[0] == g2[0] or g1[1] == g2[1]:
            raise ValueError("G1 and G2 must sit on opposite diagonal sites")
        object.__setattr__(self, "offsets", {k: tuple(offsets[k]) for k in SITES})

    def mask(self, site: str, shape: tuple[int, int]) -> np.ndarray:
        oy, ox = self.offsets[site]
        m = np.zeros(shape, dtype=bool)
        m[oy::2, ox::2] = True
        return m

    def channel_masks(self, shape: tuple[int, int]) -> np.ndarray:
        """Boolean (H, W, 3) array marking where each channel is observed."""
        masks = np.zeros(shape + (3,), dtype=bool)
        for site in SITES:
            masks[..., SITE_CHANNEL[site]] |= self.mask(site, shape)
        return masks


# ---------------------------------------------------------------------------
# Parameters and raw container
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseParams:
    shot: float = 0.0
    read: float = 0.0

    def __post_init__(self):
        if not (self.shot >= 0 and self.read >= 0):
            raise ValueError(f"noise parameters must be >= 0, got {self}")

    def as_dict(self) -> dict:
        return {"shot": float(self.shot), "read": float(self.read)}


@dataclass(frozen=True)
class IspParams:
    """Color correction matrix, white-balance gains and the sRGB curve."""

    ccm: tuple = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
    wb_gains: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        ccm = np.asarray(self.ccm, dtype=np.float64)
        gains = np.asarray(self.wb_gains, dtype=np.float64)
        if ccm.shape != (3, 3) or abs(np.linalg.det(ccm)) <= 1e-8:
            raise ValueError("ccm must be an invertible 3x3 matrix")
        if gains.shape != (3,) or np.any(gains <= 0):
            raise ValueError("wb_gains must be three positive numbers")
        object.__setattr__(self, "ccm", tuple(map(tuple, ccm.tolist())))
        object.__setattr__(self, "wb_gains", tuple(gains.tolist()))

    @classmethod
    def from_dict(cls, d: dict | None) -> "IspParams":
        d = d or {}
        return cls(**{k: d[k] for k in ("ccm", "wb_gains") if k in d})

    def as_dict(self) -> dict:
        return {"ccm": [list(r) for r in self.ccm], "wb_gains": list(self.wb_gains)}


@dataclass(frozen=True)
class RawImage:
    plane: np.ndarray
    cfa: CfaPattern = CfaPattern()
    noise: NoiseParams = NoiseParams()

    def __post_init__(self):
        plane = check_plane(self.plane).copy()
        if plane.shape[0] % 2 or plane.shape[1] % 2:
            raise ValueError(f"raw plane must have even dimensions, got {plane.shape}")
        plane.flags.writeable = False
        object.__setattr__(self, "plane", plane)

    @property
    def shape(self) -> tuple[int, int]:
        return self.plane.shape


# ---------------------------------------------------------------------------
# sRGB <-> linRGB
# ---------------------------------------------------------------------------

def srgb_decode(v: np.ndarray) -> np.ndarray:
    """Inverse sRGB transfer curve."""
    v = np.asarray(v, dtype=np.float64)
    return np.where(v <= 0.04045, v / 12.92,
                    ((np.maximum(v, 0.04045) + 0.055) / 1.055) ** 2.4)


def srgb_encode(v: np.ndarray) -> np.ndarray:
    """Forward sRGB transfer curve (linear segment extends below zero)."""
    v = np.asarray(v, dtype=np.float64)
    return np.where(v <= 0.0031308, 12.92 * v,
                    1.055 * np.maximum(v, 0.0031308) ** (1 / 2.4) - 0.055)


def _require(img: RgbImage, space: str) -> None:
    if not isinstance(img, RgbImage):
        raise TypeError("expected an RgbImage")
    if img.colorspace != space:
        raise ValueError(f"expected a {space} image, got {img.colorspace}")


def srgb_to_linrgb(img: RgbImage, params: IspParams = IspParams()) -> RgbImage:
    """Unprocess: inverse gamma, inverse CCM, inverse white balance."""
    _require(img, "sRGB")
    lin = srgb_decode(img.data)
    lin = lin @ np.linalg.inv(np.asarray(params.ccm)).T
    lin = lin / np.asarray(params.wb_gains)
    return RgbImage(lin, "linRGB")


def linrgb_to_srgb(img: RgbImage, params: IspParams = IspParams()) -> RgbImage:
    """Process: white balance, CCM, sRGB gamma, clamp to [0, 1]."""
    _require(img, "linRGB")
    v = img.data * np.asarray(params.wb_gains)
    v = v @ np.asarray(params.ccm).T
    return RgbImage(np.clip(srgb_encode(v), 0.0, 1.0), "sRGB")


# ---------------------------------------------------------------------------
# Mosaicking and noise
# ---------------------------------------------------------------------------

def mosaic(img: RgbImage, cfa: CfaPattern = CfaPattern()) -> RawImage:
    data = img.data if isinstance(img, RgbImage) else np.asarray(img, dtype=np.float64)
    h, w = data.shape[:2]
    if h % 2 or w % 2:
        raise ValueError(f"mosaic needs even dimensions, got {h}x{w}")
    plane = np.empty((h, w))
    for site, (oy, ox) in cfa.offsets.items():
        plane[oy::2, ox::2] = data[oy::2, ox::2, SITE_CHANNEL[site]]
    return RawImage(plane, cfa, NoiseParams())


def apply_noise(raw: RawImage, params: NoiseParams, seed) -> RawImage:
    """Add zero-mean Gaussian noise with variance ``shot * max(y, 0) + read``.

    The result is not clamped.
    """
    rng = np.random.default_rng(seed)
    var = params.shot * np.maximum(raw.plane, 0.0) + params.read
    noisy = raw.plane + np.sqrt(var) * rng.standard_normal(raw.shape)
    return RawImage(noisy, raw.cfa, params)


def read_from_shot(shot: float, slope: float = READ_SLOPE,
                   intercept: float = READ_INTERCEPT) -> float:
    """Read-noise level tied to the shot level by ``log r = slope log s + intercept``."""
    if shot == 0:
        return 0.0
    return float(np.exp(slope * np.log(shot) + intercept))


def sample_noise_params(seed, shot_range: tuple[float, float] = SHOT_RANGE,
                        slope: float = READ_SLOPE,
                        intercept: float = READ_INTERCEPT) -> NoiseParams:
    """Draw a shot level log-uniformly in ``shot_range`` and derive the read level."""
    rng = np.random.default_rng(seed)
    lo, hi = np.log(shot_range[0]), np.log(shot_range[1])
    shot = float(np.exp(rng.uniform(lo, hi)))
    shot = min(max(shot, shot_range[0]), shot_range[1])
    return NoiseParams(shot, read_from_shot(shot, slope, intercept))


# ---------------------------------------------------------------------------
# Demosaicking
# ---------------------------------------------------------------------------

_BILINEAR_RB = np.array([[1, 2, 1], [2, 4, 2], [1, 2, 1]], dtype=np.float64) / 4
_BILINEAR_G = np.array([[0, 1, 0], [1, 4, 1], [0, 1, 0]], dtype=np.float64) / 4


def demosaic_bilinear(raw: RawImage) -> RgbImage:
    """Bilinear demosaicking with edge replication at the borders.

    Implemented as normalized convolution so border pixels average only the
    real same-color neighbors; observed samples are kept as-is.
    """
    plane = raw.plane
    masks = raw.cfa.channel_masks(plane.shape)
    out = np.empty(plane.shape + (3,))
    for c in range(3):
        m = masks[..., c].astype(np.float64)
        kern = _BILINEAR_G if c == 1 else _BILINEAR_RB
        num = convolve(plane * m, kern, mode="nearest")
        den = convolve(m, kern, mode="nearest")
        out[..., c] = np.where(masks[..., c], plane, num / den)
    return RgbImage(out, "linRGB")


# Gradient-corrected linear interpolation stencils (Malvar, He & Cutler),
# scaled by 1/8. Named after what they estimate at which kind of site.
_GC_G_AT_RB = np.array([
    [0, 0, -1, 0, 0],
    [0, 0, 2, 0, 0],
    [-1, 2, 4, 2, -1],
    [0, 0, 2, 0, 0],
    [0, 0, -1, 0, 0]], dtype=np.float64) / 8
# chroma at a green site whose same-row neighbors carry that chroma
_GC_ROWCHROMA_AT_G = np.array([
    [0, 0, 0.5, 0, 0],
    [0, -1, 0, -1, 0],
    [-1, 4, 5, 4, -1],
    [0, -1, 0, -1, 0],
    [0, 0, 0.5, 0, 0]], dtype=np.float64) / 8
_GC_COLCHROMA_AT_G = _GC_ROWCHROMA_AT_G.T.copy()
_GC_CHROMA_AT_CHROMA = np.array([
    [0, 0, -1.5, 0, 0],
    [0, 2, 0, 2, 0],
    [-1.5, 0, 6, 0, -1.5],
    [0, 2, 0, 2, 0],
    [0, 0, -1.5, 0, 0]], dtype=np.float64) / 8


def demosaic_classical(raw: RawImage) -> RgbImage:
    """Gradient-corrected linear demosaicking with fixed 5x5 stencils.

    Noise parameters on ``raw`` are ignored. Borders use symmetric
    (reflect-101) extension, which keeps the CFA phase.
    """
    plane = raw.plane
    shape = plane.shape
    cfa = raw.cfa

    def filt(k):
        return correlate(plane, k, mode="mirror")

    g_at_rb = filt(_GC_G_AT_RB)
    row_at_g = filt(_GC_ROWCHROMA_AT_G)
    col_at_g = filt(_GC_COLCHROMA_AT_G)
    cross = filt(_GC_CHROMA_AT_CHROMA)

    out = np.empty(shape + (3,))
    r_row = cfa.offsets["R"][0]
    for site in SITES:
        m = cfa.mask(site, shape)
        if site in ("G1", "G2"):
            g1_row = cfa.offsets[site][0]
            # a green site shares its row with red iff it lies on red's row
            red_in_row = g1_row == r_row
            out[m, 1] = plane[m]
            out[m, 0] = (row_at_g if red_in_row else col_at_g)[m]
            out[m, 2] = (col_at_g if red_in_row else row_at_g)[m]
        else:
            own = SITE_CHANNEL[site]
            other = 2 if own == 0 else 0
            out[m, own] = plane[m]
            out[m, 1] = g_at_rb[m]
            out[m, other] = cross[m]
    return RgbImage(out, "linRGB")


DEMOSAICKERS = {
    "bilinear": demosaic_bilinear,
    "classical": demosaic_classical,
}


def with_noise(raw: RawImage, noise: NoiseParams) -> RawImage:
    return replace(raw, noise=noise)
