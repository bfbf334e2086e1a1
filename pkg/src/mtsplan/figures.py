"""Matplotlib rendering of heatmaps, CDF curves, and benchmark tables.

Figures are written straight to files (Agg backend, no display) and
carry no volatile metadata, keeping reruns byte-stable.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SAVE_KW = dict(dpi=120, bbox_inches="tight", metadata={"Software": None})


def render_heatmap(heatmap, scene, path, title="Predicted RSS", plan=None, delta=None):
    grid = heatmap.grid
    x0, y0 = grid.origin
    extent = [x0, x0 + grid.nx * grid.cell_size, y0, y0 + grid.ny * grid.cell_size]
    values = np.ma.masked_invalid(heatmap.values)

    fig, ax = plt.subplots(figsize=(7, 5.6))
    im = ax.imshow(values, origin="lower", extent=extent, cmap="viridis", aspect="equal")
    cbar = fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
    cbar.set_label("RSS (dBm)")
    if delta is not None and np.isfinite(values).any():
        # outline the blind region
        ax.contour(
            np.where(np.isfinite(heatmap.values), heatmap.values, -1e6),
            levels=[delta],
            colors="red",
            linewidths=0.8,
            origin="lower",
            extent=extent,
        )

    for w in scene.walls:
        ax.plot([w.a[0], w.b[0]], [w.a[1], w.b[1]], color="black", lw=2.0)
    for seg in scene.feasible_segments:
        wall = scene.walls[seg.wall]
        a, b = wall.point_at(seg.t0), wall.point_at(seg.t1)
        ax.plot([a[0], b[0]], [a[1], b[1]], color="deepskyblue", lw=4.0, alpha=0.5)
    ax.plot(*scene.ap_position, marker="*", color="orange", markersize=14,
            markeredgecolor="black", linestyle="none", label="AP")
    if plan is not None:
        for pose in plan.poses:
            half = pose.extent / 2.0
            p0 = pose.center - half * pose.tangent
            p1 = pose.center + half * pose.tangent
            ax.plot([p0[0], p1[0]], [p0[1], p1[1]], color="magenta", lw=5.0,
                    solid_capstyle="butt")
        for tgt in plan.beam_targets:
            ax.plot(tgt[0], tgt[1], marker="x", color="magenta", markersize=8,
                    linestyle="none")

    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_title(title)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def render_cdf(values, path, delta=None, title="RSS CDF over grid cells"):
    from .report import cdf_points

    pts = cdf_points(values)
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.step(xs, ys, where="post", color="tab:blue")
    if delta is not None:
        ax.axvline(delta, color="red", ls="--", lw=1.0, label=f"threshold {delta:g} dBm")
        ax.legend(loc="lower right")
    ax.set_xlabel("RSS (dBm)")
    ax.set_ylabel("fraction of cells")
    ax.set_ylim(0, 1)
    ax.set_title(title)
    ax.grid(alpha=0.3)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def render_benchmark(rows, path, title="Phase optimization benchmarks"):
    """rows: (method, min_rss_dbm, mean_rss_dbm) triples."""
    methods = [r[0] for r in rows]
    mins = [r[1] for r in rows]
    means = [r[2] for r in rows]
    x = np.arange(len(methods))

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(x - 0.2, mins, width=0.4, label="min-user RSS", color="tab:blue")
    ax.bar(x + 0.2, means, width=0.4, label="mean RSS", color="tab:orange")
    ax.set_xticks(x)
    ax.set_xticklabels(methods, rotation=20)
    ax.set_ylabel("RSS (dBm)")
    ax.set_title(title)
    ax.legend()
    ax.grid(axis="y", alpha=0.3)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
