"""Benchmark: simulate once, restore with every method, aggregate."""

from __future__ import annotations

import json
import logging
import time
from pathlib import Path

import numpy as np

from .dataset import cmd_simulate, load_manifest, verify_dataset
from .errors import AppError
from .restore import cmd_restore, format_csv, REPORT_FIELDS

log = logging.getLogger(__name__)

METRICS = ("psnr_lin", "ssim_lin", "psnr_srgb", "ssim_srgb")
SUMMARY_FIELDS = (("method", "n")
                  + tuple(f"{s}_{m}" for m in METRICS for s in ("mean", "median"))
                  + ("gap_psnr_lin_vs_joint", "gap_psnr_srgb_vs_joint"))


def summarize(rows: list[dict], methods) -> list[dict]:
    """Mean/median of every metric per method, plus the joint-minus-method
    mean PSNR gap (empty when joint was not run)."""
    by = {m: [r for r in rows if r["method"] == m] for m in methods}
    out = []
    for m in methods:
        rs = by[m]
        row = {"method": m, "n": len(rs)}
        for k in METRICS:
            v = np.array([r[k] for r in rs])
            row[f"mean_{k}"] = float(v.mean())
            row[f"median_{k}"] = float(np.median(v))
        out.append(row)
    joint = next((r for r in out if r["method"] == "joint"), None)
    for row in out:
        for space in ("lin", "srgb"):
            key = f"gap_psnr_{space}_vs_joint"
            row[key] = (joint[f"mean_psnr_{space}"] - row[f"mean_psnr_{space}"]) if joint else ""
    return out


def by_noise(rows: list[dict], methods) -> dict:
    levels = sorted({r["shot"] for r in rows})
    return {m: {f"{s:g}": float(np.mean([r["psnr_lin"] for r in rows
                                          if r["method"] == m and r["shot"] == s]))
                for s in levels}
            for m in methods}


def cmd_bench(cfg: dict, out=None) -> dict:
    out = Path(out or cfg["out"])
    methods = list(dict.fromkeys(cfg["bench"]["methods"]))
    t0 = time.perf_counter()
    data_dir = Path(cfg["restore"]["dataset"]) if cfg["restore"]["dataset"] else out / "data"
    if cfg["restore"]["dataset"]:
        manifest = load_manifest(data_dir)
    else:
        manifest = cmd_simulate(cfg, data_dir)
    verify_dataset(data_dir, manifest)
    t_sim = time.perf_counter() - t0

    run_cfg = {**cfg, "restore": {**cfg["restore"], "save_images": cfg["bench"]["save_images"]}}
    reports = {}
    for m in methods:
        log.info("bench: running %s", m)
        reports[m] = cmd_restore(run_cfg, m, dataset=data_dir, out=out / "restore" / m)

    ids = {m: r["dataset_id"] for m, r in reports.items()}
    if len(set(ids.values()) | {manifest["dataset_id"]}) != 1:
        raise AppError("DATASET_MISMATCH", f"methods saw different datasets: {ids}")
    verify_dataset(data_dir, manifest)

    rows = [row for m in methods for row in reports[m]["rows"]]
    summary = summarize(rows, methods)
    bench_dir = out / "bench"
    bench_dir.mkdir(parents=True, exist_ok=True)
    (bench_dir / "per_image.csv").write_text(format_csv(rows, REPORT_FIELDS))
    (bench_dir / "summary.csv").write_text(format_csv(summary, SUMMARY_FIELDS))
    result = {
        "dataset": str(data_dir),
        "dataset_id": manifest["dataset_id"],
        "seed": manifest.get("seed"),
        "n_items": len(manifest["items"]),
        "methods": methods,
        "crop": cfg["crop"],
        "solver": cfg["solver"],
        "kernels": manifest["kernels"],
        "noise_config": manifest.get("noise_config"),
        "summary": summary,
        "psnr_lin_by_noise": by_noise(rows, methods),
        "wall_time_s": {"simulate": t_sim,
                        **{m: reports[m]["wall_time_s"] for m in methods},
                        "total": time.perf_counter() - t0},
    }
    if cfg["bench"]["figure"]:
        from ..plotting import plot_bench

        plot_bench(rows, summary, bench_dir / "bench.png")
        result["figure"] = "bench.png"
    (bench_dir / "bench.json").write_text(json.dumps(result, indent=2) + "\n")
    return result
