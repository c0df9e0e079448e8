"""Running the restoration methods over a simulated dataset."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from ..blur import KernelError, PsfGrid, load_psf_grid
from ..image import ImageIOError, RgbImage, load_image, save_image
from ..isp import CfaPattern, IspParams, NoiseParams, RawImage, linrgb_to_srgb
from ..metrics import psnr, ssim
from ..solver.hqs import JointProblem, hqs_restore_joint, hqs_restore_twostage, make_schedule
from ..solver.prox import make_prox
from .dataset import load_manifest, read_raw_plane
from .errors import AppError
from .kernels import read_kernel
from .tiles import restore_tiled

log = logging.getLogger(__name__)

REPORT_FIELDS = ("item", "image", "kernel", "shot", "read", "method",
                 "psnr_lin", "ssim_lin", "psnr_srgb", "ssim_srgb")


def schedule_for(noise: NoiseParams, solver: dict):
    lam = solver["lambda"]
    if lam is None:
        lam = solver["lambda_gain"] * (noise.shot + noise.read) + solver["lambda_floor"]
    return make_schedule(noise, solver["T"], lam, solver["beta_min"], solver["beta_max"])


def prox_for(solver: dict):
    return make_prox(solver["prior"], chroma_weight=solver["chroma_weight"],
                     inner_iters=solver["inner_iters"])


def run_method(method: str, raw: RawImage, kernel: np.ndarray, solver: dict) -> RgbImage:
    """Restore one raw image with a uniform kernel."""
    schedule = schedule_for(raw.noise, solver)
    prox = prox_for(solver)
    try:
        if method == "joint":
            return hqs_restore_joint(JointProblem(raw, kernel, schedule), prox,
                                     green_mode=solver["green_mode"])
        demosaicker = method.split("-", 1)[1]
        return hqs_restore_twostage(raw, kernel, schedule, prox, demosaicker)
    except KernelError as exc:
        raise AppError("KERNEL_INVALID", str(exc)) from exc


def run_method_tiled(method: str, raw: RawImage, grid: PsfGrid, solver: dict) -> RgbImage:
    try:
        out = restore_tiled(raw, grid, lambda t, k: run_method(method, t, k, solver))
    except KernelError as exc:
        raise AppError("GRID_MISMATCH", str(exc)) from exc
    return RgbImage(out, "linRGB")


def metrics(restored: RgbImage, gt_lin: RgbImage, isp: IspParams, crop: int) -> dict:
    try:
        a_s, b_s = linrgb_to_srgb(restored, isp), linrgb_to_srgb(gt_lin, isp)
        return {"psnr_lin": psnr(restored, gt_lin, crop), "ssim_lin": ssim(restored, gt_lin, crop),
                "psnr_srgb": psnr(a_s, b_s, crop), "ssim_srgb": ssim(a_s, b_s, crop)}
    except ValueError as exc:
        raise AppError("CONFIG_INVALID", f"metrics: {exc}") from exc


def _load_kernel_source(root: Path, krec: dict):
    if krec.get("source") == "psf-grid":
        try:
            return load_psf_grid(krec["path"])
        except KernelError as exc:
            raise AppError("KERNEL_INVALID", str(exc)) from exc
    return read_kernel(root / krec["path"])


def _restore_job(job: tuple) -> dict:
    """One item; module-level so it can run in a worker process."""
    root, item, kernel, gt_lin, isp, method, solver, crop, save_dir = job
    noise = item.get("noise")
    if not noise or "shot" not in noise or "read" not in noise:
        raise AppError("METADATA_MISSING", f"item {item.get('id')}: no noise parameters")
    raw = RawImage(read_raw_plane(root, item), CfaPattern(item.get("cfa", "RGGB")),
                   NoiseParams(float(noise["shot"]), float(noise["read"])))
    t0 = time.perf_counter()
    if isinstance(kernel, PsfGrid):
        restored = run_method_tiled(method, raw, kernel, solver)
    else:
        restored = run_method(method, raw, kernel, solver)
    seconds = time.perf_counter() - t0
    if save_dir is not None:
        d = Path(save_dir) / item["id"]
        d.mkdir(parents=True, exist_ok=True)
        save_image(restored, d / "restored_lin.pfm")
        save_image(linrgb_to_srgb(restored, isp), d / "restored_srgb.png")
    row = {"item": item["id"], "image": item["image"], "kernel": item["kernel"],
           "shot": raw.noise.shot, "read": raw.noise.read, "method": method,
           **metrics(restored, gt_lin, isp, crop)}
    return {"row": row, "seconds": seconds}


def _gt(root: Path, image: dict) -> RgbImage:
    try:
        return load_image(root / image["gt_lin"], colorspace="linRGB")
    except (ImageIOError, KeyError) as exc:
        raise AppError("MANIFEST_INVALID", f"ground truth for {image.get('name')}: {exc}") from exc


def format_csv(rows: list[dict], fields) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(fields), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (f"{v:.10g}" if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def cmd_restore(cfg: dict, method: str | None = None, dataset=None, out=None) -> dict:
    """Restore every item of a dataset with one method and write its report."""
    method = method or cfg["method"]
    root = Path(dataset or cfg["restore"]["dataset"] or cfg["out"])
    out = Path(out or Path(cfg["out"]) / "restore" / method)
    manifest = load_manifest(root)
    isp = IspParams.from_dict(manifest.get("isp"))
    kernels = {k["id"]: k for k in manifest["kernels"]}
    images = {im["name"]: im for im in manifest["images"]}
    save_dir = out / "images" if cfg["restore"]["save_images"] else None

    jobs, cache_k, cache_gt = [], {}, {}
    for item in manifest["items"]:
        kid, name = item.get("kernel"), item.get("image")
        if kid not in kernels:
            raise AppError("METADATA_MISSING", f"item {item.get('id')}: unknown kernel {kid!r}")
        if name not in images:
            raise AppError("METADATA_MISSING", f"item {item.get('id')}: unknown image {name!r}")
        if kid not in cache_k:
            cache_k[kid] = _load_kernel_source(root, kernels[kid])
        if name not in cache_gt:
            cache_gt[name] = _gt(root, images[name])
        jobs.append((root, item, cache_k[kid], cache_gt[name], isp, method, cfg["solver"],
                     cfg["crop"], save_dir))

    t0 = time.perf_counter()
    if cfg["workers"] > 1:
        # map keeps manifest order whatever the completion order
        with ProcessPoolExecutor(cfg["workers"]) as pool:
            results = list(pool.map(_restore_job, jobs))
    else:
        results = []
        for n, job in enumerate(jobs):
            results.append(_restore_job(job))
            log.info("%s %d/%d %s psnr_lin=%.2f", method, n + 1, len(jobs),
                     job[1]["id"], results[-1]["row"]["psnr_lin"])
    wall = time.perf_counter() - t0

    rows = [r["row"] for r in results]
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(format_csv(rows, REPORT_FIELDS))
    report = {
        "method": method,
        "dataset": str(root),
        "dataset_id": manifest["dataset_id"],
        "seed": manifest.get("seed"),
        "crop": cfg["crop"],
        "solver": cfg["solver"],
        "wall_time_s": wall,
        "item_seconds": [r["seconds"] for r in results],
        "mean": {k: float(np.mean([r[k] for r in rows])) for k in REPORT_FIELDS[6:]},
        "rows": rows,
    }
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    return report
