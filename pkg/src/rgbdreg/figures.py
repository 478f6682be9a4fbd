"""Report figures written alongside the delimited outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import RegistrationReport
from .geometry import RGBDFrame
from .renderer import RenderOutput


def save_registration_figure(
    path: Path,
    frames: tuple[RGBDFrame, RGBDFrame],
    renders: tuple[RenderOutput, RenderOutput],
) -> Path:
    """Side-by-side input vs. cross-rendered color and the validity masks."""
    fig, axes = plt.subplots(2, 3, figsize=(9, 5))
    for row, (frame, render) in enumerate(zip(frames, renders)):
        axes[row, 0].imshow(frame.color)
        axes[row, 0].set_title(f"input view {row + 1}")
        axes[row, 1].imshow(render.color)
        axes[row, 1].set_title(f"render view {row + 1}")
        axes[row, 2].imshow(render.valid, cmap="gray", vmin=0, vmax=1)
        axes[row, 2].set_title("valid mask")
    for ax in axes.ravel():
        ax.set_axis_off()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def save_error_cdf_figure(path: Path, reports: list[RegistrationReport]) -> Path:
    """Empirical CDFs of the three error metrics over a dataset."""
    metrics = [
        ("rotation error (deg)", [r.rotation_error_deg for r in reports]),
        ("translation error (cm)", [r.translation_error_cm for r in reports]),
        (
            "chamfer error (cm)",
            [r.chamfer_error_cm for r in reports if r.chamfer_error_cm is not None],
        ),
    ]
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
    for ax, (label, values) in zip(axes, metrics):
        if values:
            xs = np.sort(values)
            ys = np.arange(1, len(xs) + 1) / len(xs)
            ax.step(xs, ys, where="post")
        ax.set_xlabel(label)
        ax.set_ylabel("fraction of pairs")
        ax.set_ylim(0, 1.02)
        ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def save_benchmark_figure(path: Path, rows: list[dict]) -> Path:
    """Fit time and error versus subset count."""
    subsets = [row["subsets"] for row in rows]
    fig, (ax_time, ax_err) = plt.subplots(1, 2, figsize=(10, 3.8))

    times = [row["time_ms_mean"] for row in rows]
    stds = [row["time_ms_std"] for row in rows]
    ax_time.errorbar(subsets, times, yerr=stds, marker="o")
    ax_time.set_xscale("log")
    ax_time.set_xlabel("random subsets")
    ax_time.set_ylabel("fit time (ms)")
    ax_time.grid(alpha=0.3)

    ax_err.plot(subsets, [row["chamfer_mean_cm"] for row in rows], marker="o", label="chamfer cm")
    ax_err.plot(subsets, [row["rot_mean_deg"] for row in rows], marker="s", label="rotation deg")
    ax_err.plot(
        subsets, [row["trans_mean_cm"] for row in rows], marker="^", label="translation cm"
    )
    ax_err.set_xscale("log")
    ax_err.set_xlabel("random subsets")
    ax_err.set_ylabel("mean error")
    ax_err.legend()
    ax_err.grid(alpha=0.3)

    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
