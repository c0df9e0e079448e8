"""Figures for benchmark reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_bench(rows: list[dict], summary: list[dict], path) -> None:
    """Mean PSNR per method and noise level (both color spaces), and the
    per-item PSNR of each baseline against joint."""
    methods = [s["method"] for s in summary]
    levels = sorted({r["shot"] for r in rows})
    fig, axes = plt.subplots(1, 3, figsize=(14, 4.2))

    width = 0.8 / max(len(methods), 1)
    x = np.arange(len(levels))
    for ax, space in zip(axes[:2], ("lin", "srgb")):
        for i, m in enumerate(methods):
            means = [np.mean([r[f"psnr_{space}"] for r in rows
                              if r["method"] == m and r["shot"] == s]) for s in levels]
            ax.bar(x + (i - (len(methods) - 1) / 2) * width, means, width, label=m)
        ax.set_xticks(x, [f"{s:g}" for s in levels])
        ax.set_xlabel("shot noise level")
        ax.set_ylabel("mean PSNR [dB]")
        ax.set_title("linRGB" if space == "lin" else "sRGB")
        lo = min(np.mean([r[f"psnr_{space}"] for r in rows if r["shot"] == s]) for s in levels)
        ax.set_ylim(bottom=lo - 4)
    axes[0].legend(fontsize=8)

    ax = axes[2]
    joint = {r["item"]: r["psnr_lin"] for r in rows if r["method"] == "joint"}
    if joint:
        for m in methods:
            if m == "joint":
                continue
            pts = [(r["psnr_lin"], joint[r["item"]]) for r in rows
                   if r["method"] == m and r["item"] in joint]
            if pts:
                a = np.array(pts)
                ax.scatter(a[:, 0], a[:, 1], s=8, label=m)
        lims = [min(ax.get_xlim()[0], ax.get_ylim()[0]), max(ax.get_xlim()[1], ax.get_ylim()[1])]
        ax.plot(lims, lims, "k--", lw=0.8)
        ax.set_xlabel("baseline PSNR linRGB [dB]")
        ax.set_ylabel("joint PSNR linRGB [dB]")
        ax.set_title("per item")
        ax.legend(fontsize=8)
    else:
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
