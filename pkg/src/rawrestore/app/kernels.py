"""Kernel generation and kernel files for the harness."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..blur import (KernelError, PsfGrid, gen_gaussian_kernel, gen_motion_kernel,
                    make_rgb_kernel, normalize_kernel, save_psf_grid, tile_starts,
                    validate_kernel)
from ..image import ImageIOError, read_pfm, write_pfm
from .errors import AppError

PLANES = ("R", "G", "B")
META_NAME = "kernel.json"

# independent random streams derived from the run seed
STREAM_KERNEL = 1
STREAM_NOISE = 2
STREAM_NOISE_PARAMS = 3


def derive_seed(root: int, stream: int, *index: int) -> int:
    """A 32-bit seed for one work item, independent of every other item."""
    seq = np.random.SeedSequence([int(root), stream, *map(int, index)])
    return int(seq.generate_state(1, np.uint32)[0])


def make_kernel(seed: int, size: int, kind: str, angle_range=(-5.0, 5.0),
                scale_range=(0.8, 1.0)) -> tuple[np.ndarray, dict]:
    """Grayscale kernel of the given kind turned into an RGB kernel; everything
    is drawn from one generator seeded by ``seed``."""
    rng = np.random.default_rng(seed)
    if kind == "motion":
        gray = gen_motion_kernel(size, rng=rng)
    elif kind == "gaussian":
        gray = gen_gaussian_kernel(size, rng=rng)
    else:
        raise AppError("CONFIG_INVALID", f"unknown kernel type {kind!r}")
    k, params = make_rgb_kernel(gray, rng, tuple(angle_range), tuple(scale_range),
                                return_params=True)
    meta = {"seed": int(seed), "size": int(size), "type": kind, **params}
    return k, meta


def kernel_specs(cfg: dict) -> list[dict]:
    kc = cfg["kernels"]
    return [{"index": i,
             "seed": derive_seed(cfg["seed"], STREAM_KERNEL, i),
             "type": kc["types"][i % len(kc["types"])]}
            for i in range(kc["count"])]


def write_kernel(directory, k: np.ndarray, meta: dict) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for c, name in enumerate(PLANES):
        write_pfm(directory / f"{name}.pfm", k[..., c])
    (directory / META_NAME).write_text(json.dumps(meta, indent=2) + "\n")


def read_kernel(path) -> np.ndarray:
    """Load a kernel directory (R/G/B planes) or a single PFM file."""
    path = Path(path)
    try:
        if path.is_dir():
            k = np.stack([read_pfm(path / f"{n}.pfm") for n in PLANES], axis=2)
        else:
            k = read_pfm(path)
            if k.ndim == 2:
                k = np.repeat(k[..., None], 3, axis=2)
        k = k.astype(np.float64)
        # float32 storage: sums are exact only to a few ulps
        validate_kernel(k, tol=1e-4)
    except ImageIOError as exc:
        raise AppError("INPUT_MISSING" if not path.exists() else "IO_ERROR", str(exc)) from exc
    except KernelError as exc:
        raise AppError("KERNEL_INVALID", f"{path}: {exc}") from exc
    return normalize_kernel(k)


def cmd_gen_kernel(cfg: dict, out=None) -> list[dict]:
    """Write ``kernels.count`` RGB kernels under ``out/kernel_XX``.

    With ``kernels.grid_image_shape`` set, one kernel per tile of that image
    (layout from ``tiles``) is generated instead and also saved as a PSF grid
    in ``out/psf_grid``.
    """
    kc = cfg["kernels"]
    out = Path(out or cfg["out"])
    shape = kc["grid_image_shape"]
    if shape is not None:
        tile, overlap = cfg["tiles"]["size"], cfg["tiles"]["overlap"]
        rows = len(tile_starts(shape[0], tile, overlap))
        cols = len(tile_starts(shape[1], tile, overlap))
        cfg = {**cfg, "kernels": {**kc, "count": rows * cols}}
    metas, arrays = [], []
    for ks in kernel_specs(cfg):
        k, meta = make_kernel(ks["seed"], kc["size"], ks["type"],
                              kc["angle_range"], kc["scale_range"])
        write_kernel(out / f"kernel_{ks['index']:02d}", k, meta)
        metas.append(meta)
        arrays.append(k)
    if shape is not None:
        grid = PsfGrid(tile, overlap, [arrays[r * cols:(r + 1) * cols] for r in range(rows)])
        save_psf_grid(grid, out / "psf_grid")
    return metas
