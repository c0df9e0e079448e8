"""Blur kernels, PSF grids and circular convolution."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml
from scipy.ndimage import affine_transform, gaussian_filter1d

from .image import ImageIOError, check_plane, read_pfm, write_pfm

log = logging.getLogger(__name__)

DEFAULT_KERNEL_SIZE = 25
ANGLE_RANGE = (-5.0, 5.0)
SCALE_RANGE = (0.8, 1.0)


class KernelError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Validation helpers
# ---------------------------------------------------------------------------

def validate_kernel(k: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    """Check a 2-D or (h, w, 3) kernel: odd size, nonnegative, unit sum per channel."""
    k = np.asarray(k, dtype=np.float64)
    if k.ndim not in (2, 3) or (k.ndim == 3 and k.shape[2] != 3):
        raise KernelError(f"kernel must be (h, w) or (h, w, 3), got {k.shape}")
    if k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
        raise KernelError(f"kernel size must be odd, got {k.shape[:2]}")
    if np.any(k < 0):
        raise KernelError("kernel taps must be nonnegative")
    sums = k.sum(axis=(0, 1))
    if np.any(np.abs(sums - 1.0) > tol):
        raise KernelError(f"kernel must sum to 1, sums are {np.atleast_1d(sums)}")
    return k


def normalize_kernel(k: np.ndarray) -> np.ndarray:
    k = np.clip(np.asarray(k, dtype=np.float64), 0.0, None)
    s = k.sum(axis=(0, 1))
    if np.any(s <= 0):
        raise KernelError("kernel has no positive mass")
    return k / s


def delta_kernel(size: int = 1, channels: int = 3) -> np.ndarray:
    k = np.zeros((size, size))
    k[size // 2, size // 2] = 1.0
    if channels == 1:
        return k
    return np.repeat(k[..., None], channels, axis=2)


def is_delta(k: np.ndarray) -> bool:
    k = np.asarray(k)
    h, w = k.shape[:2]
    centre = k[h // 2, w // 2]
    return bool(np.all(centre == 1.0) and np.count_nonzero(k) == (1 if k.ndim == 2 else k.shape[2]))


def _check_size(size: int) -> None:
    if size < 1 or size % 2 == 0:
        raise KernelError(f"kernel size must be a positive odd integer, got {size}")


# ---------------------------------------------------------------------------
# Kernel synthesis
# ---------------------------------------------------------------------------

def gen_gaussian_kernel(size: int = DEFAULT_KERNEL_SIZE, sigma_major: float | None = None,
                        sigma_minor: float | None = None, angle: float | None = None,
                        rng=None) -> np.ndarray:
    """Anisotropic Gaussian sampled on a ``size x size`` grid, unit sum.

    ``angle`` is in radians, measured from the column axis towards the row
    axis. Parameters left as None are drawn from ``rng``.
    """
    _check_size(size)
    rng = np.random.default_rng(rng)
    if sigma_major is None:
        sigma_major = rng.uniform(0.5, size / 8)
    if sigma_minor is None:
        sigma_minor = rng.uniform(0.5, 1.0) * sigma_major
    if angle is None:
        angle = rng.uniform(0, np.pi)
    if not (sigma_major >= sigma_minor > 0):
        raise KernelError("need sigma_major >= sigma_minor > 0")

    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    cov = rot @ np.diag([sigma_major**2, sigma_minor**2]) @ rot.T
    prec = np.linalg.inv(cov)

    t = np.arange(size) - size // 2
    rows, cols = np.meshgrid(t, t, indexing="ij")
    # (x, y) = (col, row)
    q = prec[0, 0] * cols**2 + 2 * prec[0, 1] * cols * rows + prec[1, 1] * rows**2
    k = np.exp(-0.5 * q)
    return k / k.sum()


def _splat(points: np.ndarray, size: int) -> np.ndarray:
    """Bilinear splat of (row, col) points onto a size x size grid."""
    k = np.zeros((size + 1, size + 1))
    r0 = np.floor(points[:, 0]).astype(int)
    c0 = np.floor(points[:, 1]).astype(int)
    fr = points[:, 0] - r0
    fc = points[:, 1] - c0
    np.add.at(k, (r0, c0), (1 - fr) * (1 - fc))
    np.add.at(k, (r0 + 1, c0), fr * (1 - fc))
    np.add.at(k, (r0, c0 + 1), (1 - fr) * fc)
    np.add.at(k, (r0 + 1, c0 + 1), fr * fc)
    return k[:size, :size]


def gen_motion_kernel(size: int = DEFAULT_KERNEL_SIZE, path_length: float | None = None,
                      rng=None, smoothness: float = 3.0) -> np.ndarray:
    """Motion blur from a smoothed random-walk camera trajectory.

    The walk's heading changes by Gaussian increments which are then
    low-pass filtered; the path is resampled to ``path_length`` pixels of arc,
    centred on its centroid, shrunk if it would leave the grid, and splatted
    bilinearly at sub-pixel spacing.
    """
    _check_size(size)
    rng = np.random.default_rng(rng)
    if path_length is None:
        path_length = rng.uniform(size / 4, size)
    if path_length < 0:
        raise KernelError("path_length must be >= 0")

    n_steps = 64
    turns = gaussian_filter1d(rng.normal(0.0, 0.6, n_steps), smoothness, mode="nearest")
    heading = rng.uniform(0, 2 * np.pi) + np.cumsum(turns)
    step = path_length / n_steps
    traj = np.zeros((n_steps + 1, 2))
    traj[1:, 0] = np.cumsum(step * np.sin(heading))
    traj[1:, 1] = np.cumsum(step * np.cos(heading))

    # dense resampling keeps the splatted support connected
    n_dense = max(2, int(np.ceil(path_length / 0.25)) + 1)
    s = np.linspace(0, n_steps, n_dense)
    pts = np.stack([np.interp(s, np.arange(n_steps + 1), traj[:, i]) for i in range(2)], axis=1)
    pts -= pts.mean(axis=0)
    radius = size // 2
    extent = np.abs(pts).max()
    if extent > radius - 1e-9 and extent > 0:
        pts *= (radius - 1e-9) / extent
    pts += radius
    k = _splat(pts, size)
    k[k < 1e-12] = 0.0
    return k / k.sum()


def _warp(k: np.ndarray, angle_deg: float, scale: float) -> np.ndarray:
    """Rotate by ``angle_deg`` and rescale by ``scale`` about the kernel centre."""
    theta = np.deg2rad(angle_deg)
    c, s = np.cos(theta), np.sin(theta)
    # output -> input mapping: inverse rotation, inverse scale
    mat = np.array([[c, s], [-s, c]]) / scale
    centre = (np.array(k.shape, dtype=np.float64) - 1) / 2
    offset = centre - mat @ centre
    return affine_transform(k, mat, offset=offset, order=1, mode="constant", cval=0.0)


def make_rgb_kernel(gray: np.ndarray, rng=None, angle_range=ANGLE_RANGE,
                    scale_range=SCALE_RANGE, independent: bool = True,
                    return_params: bool = False):
    """Build an (h, w, 3) color kernel from a grayscale one.

    Blue is the input kernel; red and green are rotated by an angle drawn
    from ``angle_range`` (degrees) and shrunk by a factor from
    ``scale_range``, using bilinear warping with zero fill. Each channel is
    then clipped at zero and renormalized. With ``independent=False`` red and
    green share one draw.
    """
    gray = np.asarray(gray, dtype=np.float64)
    validate_kernel(gray)
    rng = np.random.default_rng(rng)

    draws = []
    for _ in range(2 if independent else 1):
        draws.append((float(rng.uniform(*angle_range)), float(rng.uniform(*scale_range))))
    if not independent:
        draws = draws * 2

    channels = []
    for angle, scale in draws:
        if angle == 0.0 and scale == 1.0:
            channels.append(gray.copy())
        else:
            channels.append(_warp(gray, angle, scale))
    channels.append(gray.copy())
    k = normalize_kernel(np.stack(channels, axis=2))
    if return_params:
        params = {"angles": [draws[0][0], draws[1][0]], "scales": [draws[0][1], draws[1][1]]}
        return k, params
    return k


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------

def kernel_otf(kernel: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """FFT of a centred kernel zero-padded to ``shape`` (centre moved to origin)."""
    kernel = np.asarray(kernel, dtype=np.float64)
    kh, kw = kernel.shape[:2]
    if kh > shape[0] or kw > shape[1]:
        raise KernelError(f"kernel {kernel.shape[:2]} larger than image {shape}")
    pad = np.zeros(tuple(shape) + kernel.shape[2:])
    pad[:kh, :kw] = kernel
    pad = np.roll(pad, (-(kh // 2), -(kw // 2)), axis=(0, 1))
    return np.fft.fft2(pad, axes=(0, 1))


def convolve_circular(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Periodic convolution of a 2-D plane with a centred kernel, via FFT."""
    plane = check_plane(plane)
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 2:
        raise KernelError("convolve_circular takes a 2-D kernel")
    if kernel.shape[0] > plane.shape[0] or kernel.shape[1] > plane.shape[1]:
        raise KernelError(f"kernel {kernel.shape} larger than image {plane.shape}")
    if is_delta(kernel):
        return plane.copy()
    otf = kernel_otf(kernel, plane.shape)
    return np.real(np.fft.ifft2(np.fft.fft2(plane) * otf))


def blur_rgb(img, kernel: np.ndarray):
    """Blur each channel with its own kernel; accepts RgbImage or array."""
    from .image import RgbImage

    data = img.data if isinstance(img, RgbImage) else np.asarray(img, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim == 2:
        kernel = np.repeat(kernel[..., None], 3, axis=2)
    if data.shape[2] != 3 or kernel.shape[2] != 3:
        raise KernelError("blur_rgb needs 3-channel image and kernel")
    out = np.stack([convolve_circular(data[..., c], kernel[..., c]) for c in range(3)], axis=2)
    if isinstance(img, RgbImage):
        return img.with_data(out)
    return out


def _taper_weights(shape: tuple[int, int], band: int) -> np.ndarray:
    def ramp(n):
        w = np.ones(n)
        b = min(band, n // 2)
        if b > 0:
            t = (np.arange(b) + 0.5) / b
            r = np.sin(0.5 * np.pi * t) ** 2
            w[:b] = r
            w[n - b:] = r[::-1]
        return w

    return np.outer(ramp(shape[0]), ramp(shape[1]))


def edge_taper(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Blend the border band (kernel radius wide) towards the circularly
    blurred image so the periodic wrap-around has no hard seam."""
    plane = check_plane(plane)
    kernel = np.asarray(kernel, dtype=np.float64)
    band = max(kernel.shape[0], kernel.shape[1]) // 2
    if band == 0:
        return plane.copy()
    blurred = convolve_circular(plane, kernel)
    w = _taper_weights(plane.shape, band)
    out = plane.copy()
    edge = w < 1.0
    out[edge] = w[edge] * plane[edge] + (1 - w[edge]) * blurred[edge]
    return out


# ---------------------------------------------------------------------------
# PSF grids
# ---------------------------------------------------------------------------

def tile_starts(length: int, tile: int, overlap: int) -> list[int]:
    """Start offsets of tiles of size ``tile`` stepping by ``tile - overlap``;
    the last tile is pulled back to end flush with the image."""
    if overlap >= tile:
        raise ValueError("overlap must be smaller than the tile size")
    if length <= tile:
        return [0]
    stride = tile - overlap
    starts = list(range(0, length - tile, stride))
    starts.append(length - tile)
    return starts


@dataclass
class PsfGrid:
    """Row-major grid of (h, w, 3) kernels, one per overlapping tile."""

    tile_size: int
    overlap: int
    kernels: list

    def __post_init__(self):
        if self.overlap < 0 or self.overlap >= self.tile_size:
            raise KernelError("overlap must satisfy 0 <= overlap < tile_size")
        if not self.kernels or not self.kernels[0]:
            raise KernelError("empty PSF grid")
        ncols = len(self.kernels[0])
        if any(len(row) != ncols for row in self.kernels):
            raise KernelError("ragged PSF grid")
        shape = np.asarray(self.kernels[0][0]).shape
        for row in self.kernels:
            for k in row:
                if np.asarray(k).shape != shape:
                    raise KernelError("inconsistent kernel sizes in PSF grid")

    @property
    def grid_shape(self) -> tuple[int, int]:
        return len(self.kernels), len(self.kernels[0])

    def check_covers(self, shape: tuple[int, int]) -> None:
        need = (len(tile_starts(shape[0], self.tile_size, self.overlap)),
                len(tile_starts(shape[1], self.tile_size, self.overlap)))
        if need != self.grid_shape:
            raise KernelError(f"PSF grid {self.grid_shape} does not match the "
                              f"{need} tiles needed for a {shape[0]}x{shape[1]} image")

    @classmethod
    def uniform(cls, kernel: np.ndarray, image_shape: tuple[int, int],
                tile_size: int = 256, overlap: int = 64) -> "PsfGrid":
        rows = len(tile_starts(image_shape[0], tile_size, overlap))
        cols = len(tile_starts(image_shape[1], tile_size, overlap))
        return cls(tile_size, overlap, [[np.array(kernel) for _ in range(cols)] for _ in range(rows)])


INDEX_NAME = "index.yaml"


def save_psf_grid(grid: PsfGrid, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rows, cols = grid.grid_shape
    files = []
    for i in range(rows):
        for j in range(cols):
            name = f"psf_{i:02d}_{j:02d}.pfm"
            write_pfm(directory / name, np.asarray(grid.kernels[i][j]))
            files.append(name)
    index = {"tile_size": grid.tile_size, "overlap": grid.overlap,
             "rows": rows, "cols": cols, "files": files}
    (directory / INDEX_NAME).write_text(yaml.safe_dump(index, sort_keys=False))


def load_psf_grid(directory, tol: float = 1e-3) -> PsfGrid:
    """Read a PSF grid directory; kernels off unit sum by more than ``tol``
    are renormalized with a warning."""
    directory = Path(directory)
    try:
        index = yaml.safe_load((directory / INDEX_NAME).read_text())
        tile_size = int(index["tile_size"])
        overlap = int(index["overlap"])
        rows, cols = int(index["rows"]), int(index["cols"])
        files = list(index["files"])
    except FileNotFoundError as exc:
        raise KernelError(f"{directory}: missing {INDEX_NAME}") from exc
    except (yaml.YAMLError, KeyError, TypeError, ValueError) as exc:
        raise KernelError(f"{directory}: malformed PSF index ({exc})") from exc

    if len(files) != rows * cols:
        raise KernelError(f"missing tile: index declares {rows}x{cols} grid "
                          f"but lists {len(files)} files")
    kernels = []
    for i in range(rows):
        row = []
        for j in range(cols):
            path = directory / files[i * cols + j]
            if not path.is_file():
                raise KernelError(f"missing tile ({i}, {j}): {path}")
            try:
                k = read_pfm(path).astype(np.float64)
            except ImageIOError as exc:
                raise KernelError(str(exc)) from exc
            if k.ndim == 2:
                k = np.repeat(k[..., None], 3, axis=2)
            if np.any(k < 0):
                raise KernelError(f"{path}: negative taps")
            sums = k.sum(axis=(0, 1))
            if np.any(np.abs(sums - 1.0) > tol):
                log.warning("%s: kernel sums %s renormalized to 1", path, sums.tolist())
                k = k / sums
            row.append(k)
        kernels.append(row)
    return PsfGrid(tile_size, overlap, kernels)
