"""Report emission: JSON document, delimited CSV outputs, and figures.

All emitted content is a pure function of the run inputs (no timestamps,
no absolute paths), so repeated runs with the same seed are byte-identical.
"""
from __future__ import annotations

import json
import os

import numpy as np

from .controller import DeploymentReport
from .csm import bits_to_hex
from .raytrace import NO_COVERAGE_DBM


def encode_dbm(value: float) -> float:
    """Map -inf (no coverage) to the file sentinel."""
    return float(value) if np.isfinite(value) else NO_COVERAGE_DBM


def cdf_points(values) -> list:
    """Empirical CDF of a value collection as (rss_dbm, fraction) pairs."""
    vals = sorted(encode_dbm(v) for v in np.asarray(values).reshape(-1))
    n = len(vals)
    return [(v, (k + 1) / n) for k, v in enumerate(vals)]


def write_cdf_csv(values, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("rss_dbm,fraction\n")
        for v, frac in cdf_points(values):
            f.write(f"{v:.6f},{frac:.6f}\n")


def write_benchmark_csv(rows, path) -> None:
    """rows: (method, min_rss_dbm, mean_rss_dbm) triples."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("method,min_rss_dbm,mean_rss_dbm\n")
        for method, mn, mean in rows:
            f.write(f"{method},{encode_dbm(mn):.6f},{encode_dbm(mean):.6f}\n")


def report_to_dict(report: DeploymentReport, files: dict | None = None) -> dict:
    doc = {
        "scene": {
            "file": report.scene_file,
            "n_walls": len(report.scene.walls),
            "ap_position": report.scene.ap_position.tolist(),
            "tx_power_dbm": report.scene.tx_power_dbm,
            "frequency_hz": report.scene.carrier_frequency_hz,
        },
        "config": report.config.to_dict(),
        "grid": {
            "origin": report.grid.origin.tolist(),
            "cell_size": report.grid.cell_size,
            "nx": report.grid.nx,
            "ny": report.grid.ny,
        },
        "blind_spots": {
            "threshold_dbm": report.config.delta,
            "before": {
                "count": len(report.blind_before),
                "cells": [list(c) for c in report.blind_before],
            },
            "after": {
                "count": len(report.blind_after),
                "cells": [list(c) for c in report.blind_after],
            },
        },
        "plan": report.plan.to_dict(),
        "phases": {
            "n_atoms": int(report.bits.shape[0]),
            "bits_hex": bits_to_hex(report.bits) if report.bits.shape[0] else "",
            "source": report.bits_source,
        },
        "users": {
            "positions": report.users.tolist(),
            "rss_before_dbm": [encode_dbm(v) for v in report.user_rss_before],
            "rss_after_dbm": [encode_dbm(v) for v in report.user_rss_after],
            "min_rss_after_dbm": (
                encode_dbm(report.user_rss_after.min())
                if report.user_rss_after.size
                else None
            ),
        },
        "exhausted": report.exhausted,
    }
    if report.clustering is not None:
        sizes = report.clustering.sizes()
        doc["clustering"] = {
            "M": report.clustering.M,
            "capacity": report.clustering.capacity,
            "clusters": [
                {
                    "id": k,
                    "centroid": report.clustering.centroids[k].tolist(),
                    "cells": [
                        list(report.blind_before[m])
                        for m in report.clustering.members(k)
                    ],
                    "size": int(sizes[k]),
                }
                for k in range(report.clustering.M)
            ],
        }
    if report.monitor_epochs:
        doc["monitor"] = {
            "patience": report.config.patience,
            "epochs": [
                {
                    "epoch": e.epoch,
                    "rss_dbm": [encode_dbm(v) for v in e.per_user_rss_dbm],
                    "min_rss_dbm": encode_dbm(e.min_rss_dbm),
                    "mode": e.mode,
                    "action": e.action,
                }
                for e in report.monitor_epochs
            ],
        }
    if files:
        doc["files"] = dict(sorted(files.items()))
    return doc


def write_report_files(report: DeploymentReport, outdir, stem: str,
                       figures: bool | None = None) -> dict:
    """Write the report JSON plus sibling CSVs (and PNG figures).

    Returns {label: filename} for everything emitted. Figure rendering
    follows report.config.figures unless overridden.
    """
    os.makedirs(outdir, exist_ok=True)
    if figures is None:
        figures = report.config.figures
    files = {}

    before_csv = f"{stem}.before.heatmap.csv"
    after_csv = f"{stem}.after.heatmap.csv"
    cdf_csv = f"{stem}.cdf.csv"
    report.before.write_csv(os.path.join(outdir, before_csv))
    report.after.write_csv(os.path.join(outdir, after_csv))
    write_cdf_csv(report.after.flat(), os.path.join(outdir, cdf_csv))
    files["before_heatmap_csv"] = before_csv
    files["after_heatmap_csv"] = after_csv
    files["cdf_csv"] = cdf_csv

    if figures:
        from . import figures as figmod

        before_png = f"{stem}.before.heatmap.png"
        after_png = f"{stem}.after.heatmap.png"
        cdf_png = f"{stem}.cdf.png"
        figmod.render_heatmap(
            report.before, report.scene, os.path.join(outdir, before_png),
            title="Predicted RSS (no panels)", delta=report.config.delta,
        )
        figmod.render_heatmap(
            report.after, report.scene, os.path.join(outdir, after_png),
            title="Predicted RSS (optimized panels)", plan=report.plan,
            delta=report.config.delta,
        )
        figmod.render_cdf(
            report.after.flat(), os.path.join(outdir, cdf_png),
            delta=report.config.delta,
        )
        files["before_heatmap_png"] = before_png
        files["after_heatmap_png"] = after_png
        files["cdf_png"] = cdf_png

    doc = report_to_dict(report, files=dict(files, report_json=f"{stem}.report.json"))
    report_json = f"{stem}.report.json"
    write_json(doc, os.path.join(outdir, report_json))
    files["report_json"] = report_json
    return files


def write_json(doc: dict, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
