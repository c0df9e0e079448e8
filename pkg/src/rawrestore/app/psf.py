"""Restoring a single image under a spatially varying PSF grid."""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np

from ..blur import KernelError, load_psf_grid
from ..image import ImageIOError, RgbImage, load_image, save_image
from ..isp import (CfaPattern, IspParams, NoiseParams, RawImage, linrgb_to_srgb, mosaic,
                   read_from_shot, srgb_to_linrgb)
from .errors import AppError
from .restore import run_method_tiled


def load_observation(path, cfa: CfaPattern, noise: NoiseParams, isp: IspParams) -> RawImage:
    """A single-channel file is taken as raw. A color PNG is treated as blurry
    sRGB and linearized, a color PFM as linear RGB; either is then sampled
    through the CFA."""
    path = Path(path)
    if not path.is_file():
        raise AppError("INPUT_MISSING", f"input image not found: {path}")
    try:
        img = load_image(path)
    except ImageIOError as exc:
        raise AppError("IO_ERROR", str(exc)) from exc
    shape = img.shape[:2]
    if shape[0] % 2 or shape[1] % 2:
        raise AppError("GRID_MISMATCH", f"image {shape} must have even dimensions")
    if isinstance(img, RgbImage):
        lin = srgb_to_linrgb(img, isp) if img.colorspace == "sRGB" else img
        plane = mosaic(lin, cfa).plane
    else:
        plane = np.asarray(img, dtype=np.float64)
    return RawImage(plane, cfa, noise)


def cmd_psf_restore(cfg: dict, image, grid_dir, out=None) -> dict:
    out = Path(out or cfg["out"])
    isp = IspParams.from_dict(cfg["isp"])
    shot = cfg["noise"]["shot_levels"][0]
    noise = NoiseParams(shot, read_from_shot(shot))
    raw = load_observation(image, CfaPattern(cfg["cfa"]), noise, isp)
    try:
        grid = load_psf_grid(grid_dir)
    except KernelError as exc:
        raise AppError("KERNEL_INVALID", str(exc)) from exc
    # the grid's own index fixes the tile layout; tiles.* only applies to
    # grids built by the harness
    try:
        grid.check_covers(raw.shape)
    except KernelError as exc:
        raise AppError("GRID_MISMATCH", str(exc)) from exc

    t0 = time.perf_counter()
    restored = run_method_tiled(cfg["method"], raw, grid, cfg["solver"])
    wall = time.perf_counter() - t0
    out.mkdir(parents=True, exist_ok=True)
    save_image(restored, out / "restored_lin.pfm")
    save_image(linrgb_to_srgb(restored, isp), out / "restored_srgb.png")
    meta = {"input": str(image), "psf_grid": str(grid_dir), "method": cfg["method"],
            "tile_size": grid.tile_size, "overlap": grid.overlap,
            "grid_shape": list(grid.grid_shape), "noise": noise.as_dict(),
            "wall_time_s": wall}
    (out / "psf_restore.json").write_text(json.dumps(meta, indent=2) + "\n")
    return meta
