"""Synthetic dataset: blurred, mosaicked, noisy raw images with ground truth."""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path

import numpy as np

from ..blur import KernelError, blur_rgb, load_psf_grid
from ..image import ImageIOError, RgbImage, load_image, read_pfm, save_image
from ..isp import (CfaPattern, IspParams, NoiseParams, apply_noise, linrgb_to_srgb, mosaic,
                   read_from_shot, sample_noise_params, srgb_to_linrgb)
from ..scenes import fixture_paths
from .errors import AppError
from .kernels import (STREAM_NOISE, STREAM_NOISE_PARAMS, derive_seed, kernel_specs, make_kernel,
                      read_kernel, write_kernel)
from .tiles import blur_filter_flow

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1


def _input_paths(cfg: dict) -> list[Path]:
    paths = [Path(p) for p in cfg["inputs"]] or fixture_paths()
    for p in paths:
        if not p.is_file():
            raise AppError("INPUT_MISSING", f"input image not found: {p}")
    return paths


def _load_input(path: Path) -> RgbImage:
    try:
        img = load_image(path, colorspace="sRGB")
    except ImageIOError as exc:
        raise AppError("IO_ERROR", str(exc)) from exc
    if not isinstance(img, RgbImage):
        raise AppError("INPUT_MISSING", f"{path}: expected a color image")
    h, w = img.height - img.height % 2, img.width - img.width % 2
    if (h, w) != (img.height, img.width):
        log.info("%s: cropped to even size %dx%d", path, h, w)
        img = img.with_data(img.data[:h, :w])
    return img


def _kernels(cfg: dict, out: Path) -> list[dict]:
    """Kernel records ``{"id", "path", "meta", "array" | "grid"}``."""
    kc = cfg["kernels"]
    records = []
    if kc["source"] == "generate":
        for ks in kernel_specs(cfg):
            k, meta = make_kernel(ks["seed"], kc["size"], ks["type"],
                                  kc["angle_range"], kc["scale_range"])
            kid = f"kernel_{ks['index']:02d}"
            write_kernel(out / "kernels" / kid, k, meta)
            records.append({"id": kid, "path": f"kernels/{kid}", "meta": meta, "array": k})
    elif kc["source"] == "file":
        if not kc["files"]:
            raise AppError("CONFIG_INVALID", "kernels.source=file needs kernels.files")
        for i, f in enumerate(kc["files"]):
            k = read_kernel(f)
            kid = f"kernel_{i:02d}"
            write_kernel(out / "kernels" / kid, k, {"source": str(f)})
            records.append({"id": kid, "path": f"kernels/{kid}", "meta": {"source": str(f)},
                            "array": k})
    else:
        if not kc["grid"]:
            raise AppError("CONFIG_INVALID", "kernels.source=psf-grid needs kernels.grid")
        try:
            grid = load_psf_grid(kc["grid"])
        except KernelError as exc:
            raise AppError("KERNEL_INVALID", str(exc)) from exc
        records.append({"id": "psf_grid", "path": str(Path(kc["grid"]).resolve()),
                        "meta": {"source": "psf-grid", "tile_size": grid.tile_size,
                                 "overlap": grid.overlap, "grid_shape": list(grid.grid_shape)},
                        "grid": grid})
    return records


def _noise_list(cfg: dict, i: int, j: int) -> list[NoiseParams]:
    nc = cfg["noise"]
    if nc["mode"] == "levels":
        return [NoiseParams(s, read_from_shot(s)) for s in nc["shot_levels"]]
    return [sample_noise_params(derive_seed(cfg["seed"], STREAM_NOISE_PARAMS, i, j, s),
                                tuple(nc["shot_range"]))
            for s in range(nc["samples"])]


def file_digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def dataset_digest(root: Path, items: list[dict]) -> str:
    """Hash over item ids, noise metadata and the bytes of every raw file."""
    h = hashlib.sha256()
    for item in items:
        h.update(item["id"].encode())
        h.update(json.dumps(item["noise"], sort_keys=True).encode())
        h.update(file_digest(root / item["raw"]).encode())
    return h.hexdigest()


def cmd_simulate(cfg: dict, out=None) -> dict:
    """Write the dataset under ``out`` and return its manifest."""
    out = Path(out or cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    isp = IspParams.from_dict(cfg["isp"])
    cfa = CfaPattern(cfg["cfa"])
    kernels = _kernels(cfg, out)

    images, items = [], []
    for i, path in enumerate(_input_paths(cfg)):
        name = path.stem
        srgb = _load_input(path)
        lin = srgb_to_linrgb(srgb, isp)
        img_dir = out / "images" / name
        img_dir.mkdir(parents=True, exist_ok=True)
        save_image(lin, img_dir / "gt_lin.pfm")
        save_image(linrgb_to_srgb(lin, isp), img_dir / "gt_srgb.png")
        images.append({"name": name, "source": str(path), "gt_lin": f"images/{name}/gt_lin.pfm",
                       "gt_srgb": f"images/{name}/gt_srgb.png",
                       "shape": [lin.height, lin.width]})
        for j, krec in enumerate(kernels):
            try:
                if "grid" in krec:
                    blurred = blur_filter_flow(lin.data, krec["grid"])
                else:
                    blurred = blur_rgb(lin.data, krec["array"])
            except KernelError as exc:
                raise AppError("KERNEL_INVALID", f"{krec['id']} on {name}: {exc}") from exc
            clean = mosaic(blurred, cfa)
            for n, noise in enumerate(_noise_list(cfg, i, j)):
                seed = derive_seed(cfg["seed"], STREAM_NOISE, i, j, n)
                raw = apply_noise(clean, noise, seed)
                iid = f"{name}__{krec['id']}__n{n}"
                rel = f"items/{iid}/raw.pfm"
                (out / "items" / iid).mkdir(parents=True, exist_ok=True)
                save_image(raw.plane, out / rel)
                items.append({"id": iid, "image": name, "kernel": krec["id"], "seed": seed,
                              "noise": noise.as_dict(), "cfa": cfa.name, "raw": rel})
        log.info("simulated %s (%d items so far)", name, len(items))

    manifest = {
        "version": MANIFEST_VERSION,
        "seed": cfg["seed"],
        "cfa": cfa.name,
        "isp": isp.as_dict(),
        "noise_config": cfg["noise"],
        "kernels": [{"id": k["id"], "path": k["path"], **k["meta"]} for k in kernels],
        "images": images,
        "items": items,
        "dataset_id": dataset_digest(out, items),
    }
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def load_manifest(root) -> dict:
    root = Path(root)
    path = root / MANIFEST_NAME
    if not path.is_file():
        raise AppError("MANIFEST_MISSING", f"no {MANIFEST_NAME} in {root}")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise AppError("MANIFEST_INVALID", f"{path}: {exc}") from exc
    for key in ("items", "images", "kernels", "dataset_id"):
        if key not in manifest:
            raise AppError("MANIFEST_INVALID", f"{path}: missing '{key}'")
    return manifest


def verify_dataset(root, manifest: dict) -> None:
    """Recompute the dataset digest from the files on disk."""
    try:
        digest = dataset_digest(Path(root), manifest["items"])
    except (OSError, KeyError) as exc:
        raise AppError("DATASET_MISMATCH", f"dataset files unreadable: {exc}") from exc
    if digest != manifest["dataset_id"]:
        raise AppError("DATASET_MISMATCH",
                       f"files in {root} do not match manifest dataset_id {manifest['dataset_id'][:12]}")


def read_raw_plane(root: Path, item: dict) -> np.ndarray:
    try:
        return read_pfm(root / item["raw"]).astype(np.float64)
    except ImageIOError as exc:
        raise AppError("IO_ERROR", str(exc)) from exc
