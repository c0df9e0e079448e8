"""Tile-wise restoration under a spatially varying PSF.

The image is cut into overlapping tiles (one kernel each). Every tile is
padded, edge-tapered and restored on its own, and the results are blended
with raised-cosine windows that sum to one at every pixel.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..blur import PsfGrid, _taper_weights, blur_rgb, tile_starts
from ..image import as_array
from ..isp import RawImage, demosaic_bilinear, mosaic


def window_1d(length: int, tile: int, overlap: int) -> list[np.ndarray]:
    """Per-tile 1-D blending weights (each of size ``min(tile, length)``).

    Each tile gets a raised-cosine ramp across the part it shares with a
    neighbour and is flat elsewhere; the weights are then divided by their
    sum so they add up to one at every position.
    """
    starts = tile_starts(length, tile, overlap)
    size = min(tile, length)
    raw = []
    for i, s in enumerate(starts):
        w = np.ones(size)
        if i > 0:
            n = starts[i - 1] + size - s  # shared with the previous tile
            t = (np.arange(n) + 0.5) / n
            w[:n] = 0.5 - 0.5 * np.cos(np.pi * t)
        if i + 1 < len(starts):
            n = s + size - starts[i + 1]
            t = (np.arange(n) + 0.5) / n
            w[size - n:] = 0.5 + 0.5 * np.cos(np.pi * t)
        raw.append(w)
    total = np.zeros(length)
    for s, w in zip(starts, raw):
        total[s:s + size] += w
    return [w / total[s:s + size] for s, w in zip(starts, raw)]


def blend_weights(shape: tuple[int, int], tile: int, overlap: int) -> dict:
    """``{(i, j): (row0, col0, weights)}`` for every tile of the grid."""
    rows = tile_starts(shape[0], tile, overlap)
    cols = tile_starts(shape[1], tile, overlap)
    wr = window_1d(shape[0], tile, overlap)
    wc = window_1d(shape[1], tile, overlap)
    return {(i, j): (r, c, np.outer(wr[i], wc[j]))
            for i, r in enumerate(rows) for j, c in enumerate(cols)}


def weight_sum(shape: tuple[int, int], tile: int, overlap: int) -> np.ndarray:
    total = np.zeros(shape)
    for r, c, w in blend_weights(shape, tile, overlap).values():
        total[r:r + w.shape[0], c:c + w.shape[1]] += w
    return total


def pad_amount(kernel: np.ndarray) -> int:
    """Kernel radius rounded up to an even number so the CFA phase survives."""
    r = max(kernel.shape[0], kernel.shape[1]) // 2
    return r + (r % 2)


def pad_raw(raw: RawImage, pad: int) -> RawImage:
    """Edge-replicate each CFA sub-plane by ``pad / 2`` samples."""
    if pad % 2:
        raise ValueError("raw padding must be even")
    if pad == 0:
        return raw
    h, w = raw.shape
    out = np.empty((h + 2 * pad, w + 2 * pad))
    for oy in (0, 1):
        for ox in (0, 1):
            sub = raw.plane[oy::2, ox::2]
            out[oy::2, ox::2] = np.pad(sub, pad // 2, mode="edge")
    return RawImage(out, raw.cfa, raw.noise)


def taper_raw(raw: RawImage, kernel: np.ndarray) -> RawImage:
    """Blend the border band towards a circularly blurred copy, CFA-aware.

    The blurred copy is made by demosaicking, blurring each channel with its
    own kernel and mosaicking again, so every site stays on its own color.
    """
    band = max(kernel.shape[0], kernel.shape[1]) // 2
    if band == 0:
        return raw
    blurred = mosaic(blur_rgb(demosaic_bilinear(raw), kernel), raw.cfa).plane
    w = _taper_weights(raw.shape, band)
    return RawImage(w * raw.plane + (1 - w) * blurred, raw.cfa, raw.noise)


RestoreFn = Callable[[RawImage, np.ndarray], np.ndarray]


def restore_tiled(raw: RawImage, grid: PsfGrid, restore: RestoreFn,
                  taper: bool = True) -> np.ndarray:
    """Restore ``raw`` tile by tile with the grid's local kernels.

    ``restore(raw_tile, kernel)`` returns an (h, w, 3) array for its tile.
    """
    h, w = raw.shape
    if h % 2 or w % 2:
        raise ValueError("tiled restoration needs even image dimensions")
    if grid.tile_size % 2 or grid.overlap % 2:
        raise ValueError("tile size and overlap must be even to keep the CFA phase")
    grid.check_covers(raw.shape)
    out = np.zeros((h, w, 3))
    for (i, j), (r0, c0, wts) in blend_weights(raw.shape, grid.tile_size, grid.overlap).items():
        kernel = np.asarray(grid.kernels[i][j])
        th, tw = wts.shape
        tile = RawImage(raw.plane[r0:r0 + th, c0:c0 + tw], raw.cfa, raw.noise)
        pad = pad_amount(kernel)
        padded = pad_raw(tile, pad)
        if taper:
            padded = taper_raw(padded, kernel)
        rest = as_array(restore(padded, kernel))[pad:pad + th, pad:pad + tw]
        out[r0:r0 + th, c0:c0 + tw] += wts[..., None] * rest
    return out


def blur_filter_flow(img: np.ndarray, grid: PsfGrid) -> np.ndarray:
    """Spatially varying blur: the window-weighted sum of per-tile blurs."""
    img = as_array(img)
    h, w = img.shape[:2]
    grid.check_covers((h, w))
    out = np.zeros_like(img)
    for (i, j), (r0, c0, wts) in blend_weights((h, w), grid.tile_size, grid.overlap).items():
        full = np.zeros((h, w))
        full[r0:r0 + wts.shape[0], c0:c0 + wts.shape[1]] = wts
        out += full[..., None] * blur_rgb(img, np.asarray(grid.kernels[i][j]))
    return out
