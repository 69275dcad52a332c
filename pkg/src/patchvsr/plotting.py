"""Report figures written next to the CSV/JSON outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def setup_plot():
    plt.rcParams.update({
        "font.size": 10,
        "axes.titlesize": 10,
        "axes.spines.top": False,
        "axes.spines.right": False,
        "savefig.dpi": 120,
    })


def _show_frame(ax, frame, title):
    ax.imshow(np.clip(frame, 0.0, 1.0), interpolation="nearest")
    ax.set_title(title)
    ax.set_xticks([])
    ax.set_yticks([])


def _draw_seams(ax, shape, patch_px):
    h, w = shape[:2]
    for c in range(patch_px[1], w, patch_px[1]):
        ax.axvline(c - 0.5, color="w", lw=0.6, ls=":")
    for r in range(patch_px[0], h, patch_px[0]):
        ax.axhline(r - 0.5, color="w", lw=0.6, ls=":")


def plot_seam_comparison(reference, naive, joint, naive_seam, joint_seam, patch_px, path, frame=0):
    """Reference / naive stitching / joint modulation side by side, plus the
    per-pixel absolute error of the two runs."""
    setup_plot()
    fig, axes = plt.subplots(2, 3, figsize=(9, 6.2))
    _show_frame(axes[0, 0], reference[frame], "target")
    _show_frame(axes[0, 1], naive[frame], f"naive stitch (seam {naive_seam:.2f})")
    _show_frame(axes[0, 2], joint[frame], f"joint modulation (seam {joint_seam:.2f})")
    err_naive = np.abs(naive[frame] - reference[frame]).mean(axis=-1)
    err_joint = np.abs(joint[frame] - reference[frame]).mean(axis=-1)
    vmax = max(err_naive.max(), err_joint.max(), 1e-12)
    axes[1, 0].axis("off")
    for ax, err, title in ((axes[1, 1], err_naive, "|naive - target|"), (axes[1, 2], err_joint, "|joint - target|")):
        im = ax.imshow(err, cmap="magma", vmin=0.0, vmax=vmax)
        ax.set_title(title)
        ax.set_xticks([])
        ax.set_yticks([])
    for ax in axes[:, 1:].ravel():
        _draw_seams(ax, reference.shape[1:], patch_px)
    fig.colorbar(im, ax=axes[1, 1:].tolist(), shrink=0.8)
    fig.savefig(path)
    plt.close(fig)


def plot_cost_ratios(reports, path):
    setup_plot()
    ratio = np.array([r.ratio for r in reports])
    measured = np.array([r.measured_ratio for r in reports])
    order = np.argsort(ratio)
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    ax.plot(ratio[order], ratio[order], "k--", lw=1, label="n / m")
    ax.plot(ratio[order], measured[order], "o", label="measured MACs ratio")
    ax.set_xlabel("patch count n / m")
    ax.set_ylabel("full / patched attention cost")
    if ratio.max() > 1:
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_step_times(step_times, time_grid, path):
    setup_plot()
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(8, 3))
    ax0.plot(np.arange(len(time_grid)), time_grid, ".-")
    ax0.set_xlabel("step")
    ax0.set_ylabel("t")
    ax0.set_title("time grid")
    ax1.bar(np.arange(len(step_times)), 1e3 * np.asarray(step_times))
    ax1.set_xlabel("step")
    ax1.set_ylabel("ms")
    ax1.set_title("wall time per step")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
