"""Image containers and pixel-exact file I/O (PNG and PFM)."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

COLORSPACES = ("linRGB", "sRGB")


class ImageIOError(ValueError):
    """Raised when an image file cannot be read or written."""


@dataclass(frozen=True)
class RgbImage:
    """Three-plane float image (H, W, 3) tagged with its color space.

    The array is stored read-only; operations return new images.
    """

    data: np.ndarray
    colorspace: str = "linRGB"

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        if data.ndim != 3 or data.shape[2] != 3:
            raise ValueError(f"RgbImage needs an (H, W, 3) array, got {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError("RgbImage must be at least 1x1")
        if self.colorspace not in COLORSPACES:
            raise ValueError(f"unknown color space {self.colorspace!r}")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def plane(self, c: int) -> np.ndarray:
        return self.data[..., c]

    def with_data(self, data: np.ndarray) -> "RgbImage":
        return RgbImage(data, self.colorspace)


def as_array(img) -> np.ndarray:
    """Return the float64 array behind an RgbImage, or the array itself."""
    if isinstance(img, RgbImage):
        return img.data
    return np.asarray(img, dtype=np.float64)


def check_plane(plane: np.ndarray) -> np.ndarray:
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2 or plane.shape[0] < 1 or plane.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D plane, got shape {plane.shape}")
    return plane


# ---------------------------------------------------------------------------
# PFM
# ---------------------------------------------------------------------------

def read_pfm(path) -> np.ndarray:
    """Read a PFM file into a float32 array, top row first."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            header = fh.readline().strip()
            if header == b"PF":
                channels = 3
            elif header == b"Pf":
                channels = 1
            else:
                raise ImageIOError(f"{path}: not a PFM file (header {header!r})")
            dims = fh.readline().split()
            width, height = int(dims[0]), int(dims[1])
            scale = float(fh.readline().strip())
            raw = fh.read()
    except OSError as exc:
        raise ImageIOError(f"{path}: {exc}") from exc
    except (IndexError, ValueError) as exc:
        raise ImageIOError(f"{path}: malformed PFM header") from exc

    dtype = "<f4" if scale < 0 else ">f4"
    count = width * height * channels
    data = np.frombuffer(raw, dtype=dtype, count=-1)
    if data.size != count:
        raise ImageIOError(f"{path}: expected {count} samples, found {data.size}")
    shape = (height, width, channels) if channels == 3 else (height, width)
    # PFM stores rows bottom to top
    return np.flipud(data.reshape(shape)).astype(np.float32)


def write_pfm(path, data: np.ndarray) -> None:
    """Write a 2-D or (H, W, 3) array as little-endian float32 PFM."""
    data = np.asarray(data)
    if data.ndim == 2:
        header = b"Pf"
    elif data.ndim == 3 and data.shape[2] == 3:
        header = b"PF"
    else:
        raise ImageIOError(f"cannot store shape {data.shape} as PFM")
    height, width = data.shape[:2]
    body = np.ascontiguousarray(np.flipud(data), dtype="<f4").tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(header + b"\n")
            fh.write(f"{width} {height}\n".encode())
            fh.write(b"-1.0\n")
            fh.write(body)
    except OSError as exc:
        raise ImageIOError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# PNG + dispatch
# ---------------------------------------------------------------------------

def _read_png(path: Path) -> np.ndarray:
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ImageIOError(f"{path}: unreadable image")
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise ImageIOError(f"{path}: unsupported bit depth {raw.dtype}")
    if raw.ndim == 3:
        if raw.shape[2] == 4:
            raw = raw[..., :3]
        elif raw.shape[2] != 3:
            raise ImageIOError(f"{path}: unsupported channel count {raw.shape[2]}")
        raw = raw[..., ::-1]  # BGR -> RGB
    return raw.astype(np.float64) / scale


def load_image(path, colorspace: str | None = None):
    """Load a PNG (8/16 bit) or PFM image.

    Color files come back as :class:`RgbImage`, grayscale files as a 2-D
    float64 array. PNG samples are divided by ``2**bits - 1``. The color space
    tag defaults to sRGB for PNG and linRGB for PFM.
    """
    path = Path(path)
    if not path.is_file():
        raise ImageIOError(f"{path}: no such file")
    suffix = path.suffix.lower()
    if suffix == ".png":
        data = _read_png(path)
        default_space = "sRGB"
    elif suffix == ".pfm":
        data = read_pfm(path).astype(np.float64)
        default_space = "linRGB"
    else:
        raise ImageIOError(f"{path}: unsupported format {suffix!r}")
    if data.ndim == 2:
        return data
    return RgbImage(data, colorspace or default_space)


def save_image(img, path, format: str | None = None, bits: int = 8) -> None:
    """Save an RgbImage or 2-D plane as PNG (clamped, rounded) or PFM (lossless)."""
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    data = as_array(img)
    if data.ndim not in (2, 3):
        raise ImageIOError(f"cannot save array of shape {data.shape}")

    if fmt == "pfm":
        write_pfm(path, data)
        return
    if fmt != "png":
        raise ImageIOError(f"unsupported format {fmt!r}")
    if bits not in (8, 16):
        raise ImageIOError(f"unsupported PNG bit depth {bits}")

    peak = 2**bits - 1
    dtype = np.uint8 if bits == 8 else np.uint16
    # round half up
    quant = np.floor(np.clip(data, 0.0, 1.0) * peak + 0.5).astype(dtype)
    if quant.ndim == 3:
        quant = np.ascontiguousarray(quant[..., ::-1])
    try:
        ok = cv2.imwrite(str(path), quant)
    except cv2.error as exc:
        raise ImageIOError(f"{path}: {exc}") from exc
    if not ok:
        raise ImageIOError(f"{path}: write failed")

