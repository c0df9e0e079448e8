"""Test imagery: the bundled photo fixtures and a procedural standard scene."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from .image import RgbImage, load_image

FIXTURE_NAMES = ("astronaut", "chelsea", "coffee", "rocket")


def fixture_paths() -> list[Path]:
    root = resources.files("rawrestore") / "data"
    return [Path(str(root / f"{name}.png")) for name in FIXTURE_NAMES]


def load_fixtures() -> list[RgbImage]:
    """The bundled 256x256 sRGB photographs (public domain / CC0)."""
    return [load_image(p) for p in fixture_paths()]


def standard_scene(size: int = 256, seed: int = 7) -> RgbImage:
    """Deterministic sRGB scene: smooth color gradients, hard-edged shapes and
    a band of fine stripes."""
    rng = np.random.default_rng(seed)
    t = np.linspace(0, 1, size)
    rows, cols = np.meshgrid(t, t, indexing="ij")
    img = np.stack([0.25 + 0.5 * cols, 0.3 + 0.4 * rows, 0.6 - 0.3 * cols * rows], axis=2)

    for _ in range(10):
        cy, cx = rng.uniform(0.1, 0.9, 2)
        r = rng.uniform(0.04, 0.15)
        color = rng.uniform(0.05, 0.95, 3)
        if rng.random() < 0.5:
            m = (rows - cy) ** 2 + (cols - cx) ** 2 < r**2
        else:
            m = (np.abs(rows - cy) < r) & (np.abs(cols - cx) < 0.7 * r)
        img[m] = color

    band = (rows > 0.78) & (rows < 0.9)
    stripes = 0.5 + 0.4 * np.sin(2 * np.pi * cols * size / 9.0)
    img[band] = (stripes[band, None] * np.array([0.9, 0.8, 0.6]))
    return RgbImage(np.clip(img, 0, 1), "sRGB")
