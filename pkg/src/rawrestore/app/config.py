"""Experiment configuration: nested YAML merged over built-in defaults."""

from __future__ import annotations

import copy
from pathlib import Path

import yaml

from ..blur import ANGLE_RANGE, DEFAULT_KERNEL_SIZE, SCALE_RANGE
from ..isp import SHOT_RANGE
from ..metrics import DEFAULT_CROP
from ..solver.hqs import (DEFAULT_BETA_MAX, DEFAULT_BETA_MIN, DEFAULT_T, LAMBDA_FLOOR,
                          LAMBDA_NOISE_GAIN)
from ..solver.prox import DEFAULT_CHROMA_WEIGHT
from .errors import AppError

METHODS = ("joint", "twostage-bilinear", "twostage-classical")
KERNEL_SOURCES = ("generate", "file", "psf-grid")
KERNEL_TYPES = ("motion", "gaussian")

DEFAULTS = {
    "seed": 0,
    "out": "out",
    "inputs": [],                # sRGB images; empty means the bundled fixtures
    "cfa": "RGGB",
    "crop": DEFAULT_CROP,
    "method": "joint",
    "workers": 1,
    "isp": {
        "ccm": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        "wb_gains": [1.0, 1.0, 1.0],
    },
    "kernels": {
        "source": "generate",
        "count": 8,
        "size": DEFAULT_KERNEL_SIZE,
        "types": list(KERNEL_TYPES),
        "angle_range": list(ANGLE_RANGE),
        "scale_range": list(SCALE_RANGE),
        "files": [],             # kernel dirs / color PFMs for source=file
        "grid": None,            # PSF grid directory for source=psf-grid
        "grid_image_shape": None,  # [H, W]: gen-kernel also writes a PSF grid
    },
    "noise": {
        "mode": "levels",        # levels | sample
        "shot_levels": [1e-4, 1e-3, 3e-3],
        "samples": 1,
        "shot_range": list(SHOT_RANGE),
    },
    "solver": {
        "T": DEFAULT_T,
        "beta_min": DEFAULT_BETA_MIN,
        "beta_max": DEFAULT_BETA_MAX,
        "lambda": None,          # fixed prior weight; None derives it from the noise
        "lambda_gain": LAMBDA_NOISE_GAIN,
        "lambda_floor": LAMBDA_FLOOR,
        "prior": "tv",
        "chroma_weight": DEFAULT_CHROMA_WEIGHT,
        "inner_iters": 20,
        "green_mode": "joint",
    },
    "restore": {
        "dataset": None,         # directory holding manifest.json; defaults to out
        "save_images": True,
    },
    "tiles": {
        "size": 256,
        "overlap": 64,
    },
    "bench": {
        "methods": list(METHODS),
        "save_images": False,
        "figure": True,
    },
}


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in over.items():
        where = f"{path}{key}"
        if key not in base:
            raise AppError("CONFIG_INVALID", f"unknown config key '{where}'")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise AppError("CONFIG_INVALID", f"'{where}' must be a mapping")
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = value
    return out


def _check(cfg: dict) -> dict:
    def bad(msg):
        raise AppError("CONFIG_INVALID", msg)

    try:
        cfg["seed"] = int(cfg["seed"])
        cfg["crop"] = int(cfg["crop"])
        cfg["workers"] = int(cfg["workers"])
        k, n, s, t = cfg["kernels"], cfg["noise"], cfg["solver"], cfg["tiles"]
        k["count"], k["size"] = int(k["count"]), int(k["size"])
        s["T"], s["inner_iters"] = int(s["T"]), int(s["inner_iters"])
        for key in ("beta_min", "beta_max", "lambda_gain", "lambda_floor", "chroma_weight"):
            s[key] = float(s[key])
        if s["lambda"] is not None:
            s["lambda"] = float(s["lambda"])
        n["shot_levels"] = [float(v) for v in n["shot_levels"]]
        n["shot_range"] = [float(v) for v in n["shot_range"]]
        n["samples"] = int(n["samples"])
        k["angle_range"] = [float(v) for v in k["angle_range"]]
        k["scale_range"] = [float(v) for v in k["scale_range"]]
        t["size"], t["overlap"] = int(t["size"]), int(t["overlap"])
    except (TypeError, ValueError) as exc:
        bad(f"bad value type: {exc}")

    if cfg["crop"] < 0:
        bad("crop must be >= 0")
    if cfg["workers"] < 1:
        bad("workers must be >= 1")
    if cfg["method"] not in METHODS:
        bad(f"method must be one of {', '.join(METHODS)}")
    for m in cfg["bench"]["methods"]:
        if m not in METHODS:
            bad(f"bench method '{m}' is not one of {', '.join(METHODS)}")
    if k["source"] not in KERNEL_SOURCES:
        bad(f"kernels.source must be one of {', '.join(KERNEL_SOURCES)}")
    if k["size"] < 1 or k["size"] % 2 == 0:
        bad("kernels.size must be a positive odd integer")
    if k["count"] < 1:
        bad("kernels.count must be >= 1")
    if not k["types"] or any(v not in KERNEL_TYPES for v in k["types"]):
        bad(f"kernels.types must list values from {', '.join(KERNEL_TYPES)}")
    if len(k["angle_range"]) != 2 or len(k["scale_range"]) != 2:
        bad("angle_range and scale_range need two values")
    gis = k["grid_image_shape"]
    if gis is not None:
        try:
            k["grid_image_shape"] = [int(v) for v in gis]
        except (TypeError, ValueError):
            bad("kernels.grid_image_shape must be [H, W]")
        if len(k["grid_image_shape"]) != 2 or min(k["grid_image_shape"]) < 1:
            bad("kernels.grid_image_shape must be [H, W]")
    if n["mode"] not in ("levels", "sample"):
        bad("noise.mode must be 'levels' or 'sample'")
    if any(v < 0 for v in n["shot_levels"]) or not n["shot_levels"]:
        bad("noise.shot_levels must be nonnegative and non-empty")
    if s["T"] < 1 or not (0 < s["beta_min"] <= s["beta_max"]):
        bad("solver needs T >= 1 and 0 < beta_min <= beta_max")
    if s["prior"] not in ("tv", "tikhonov"):
        bad("solver.prior must be 'tv' or 'tikhonov'")
    if s["green_mode"] not in ("split", "joint"):
        bad("solver.green_mode must be 'split' or 'joint'")
    if t["size"] % 2 or t["overlap"] % 2 or not (0 <= t["overlap"] < t["size"]):
        bad("tiles need even size and overlap with 0 <= overlap < size")
    return cfg


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults, then the YAML file at ``path``, then ``overrides`` (CLI flags)."""
    user = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise AppError("CONFIG_MISSING", f"config file not found: {path}")
        try:
            user = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise AppError("CONFIG_INVALID", f"{path}: not valid YAML ({exc})") from exc
        if not isinstance(user, dict):
            raise AppError("CONFIG_INVALID", f"{path}: top level must be a mapping")
    cfg = _merge(DEFAULTS, user)
    for key, value in (overrides or {}).items():
        if value is not None:
            cfg[key] = value
    return _check(cfg)


def dump_config(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=False)
