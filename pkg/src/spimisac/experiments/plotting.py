"""SVG plots of sweep results.

Files are byte-deterministic: the SVG hash salt is fixed and no date
metadata is written.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .config import load_config  # noqa: E402
from .runner import Row, SweepResult, _x_label  # noqa: E402

__all__ = ["emit_plots", "load_result"]

_METRIC_LABELS = {
    "se": "spectral efficiency [bits/s/Hz]",
    "bf_gain": "beamforming gain",
    "comm_error": "communications beamformer error",
    "radar_error": "radar beamformer error",
    "peak_direction": "peak direction",
    "peak_gain": "peak gain",
    "gain_at_physical": "gain at physical direction",
}


def _save(fig, path):
    with plt.rc_context({"svg.hashsalt": "spimisac", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_plots(result: SweepResult, out_dir) -> list[Path]:
    """One SVG per metric (one series per method) plus one for the curves, if any."""
    if not result.rows and not result.curves:
        raise ValueError("cannot plot an empty result")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if result.config is not None and result.config.sweep.axis == "arraygain":
        metrics = []
    else:
        metrics = result.metrics()
    for metric in metrics:
        series = result.series(metric)
        if not series:
            continue
        fig, ax = plt.subplots(figsize=(6, 4))
        for method, (x, mean, err) in series.items():
            ax.errorbar(x, mean, yerr=err, marker="o", markersize=3, capsize=2, label=method)
        ax.set_xlabel(result.x_label or "sweep value")
        ax.set_ylabel(_METRIC_LABELS.get(metric, metric))
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=7)
        path = out_dir / f"{metric}.svg"
        _save(fig, path)
        written.append(path)
    if result.curves:
        fig, ax = plt.subplots(figsize=(6, 4))
        for label, (x, mean, _) in result.curves.items():
            ax.plot(x, mean, label=label, linewidth=1)
        arraygain = result.config is not None and result.config.sweep.axis == "arraygain"
        ax.set_xlabel("spatial direction" if arraygain else "angle [deg]")
        ax.set_ylabel("normalized array gain" if arraygain else "beampattern")
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=6)
        path = out_dir / ("arraygain.svg" if arraygain else "beampattern.svg")
        _save(fig, path)
        written.append(path)
    if not written:
        raise ValueError("result holds no plottable series")
    return written


def load_result(in_dir) -> SweepResult:
    """Read ``results.csv`` (and ``curves.csv`` when present) written by :meth:`SweepResult.write_csv`."""
    in_dir = Path(in_dir)
    res_path = in_dir / "results.csv"
    if not res_path.is_file():
        raise FileNotFoundError(f"no results.csv in {in_dir}")
    rows = []
    with res_path.open(encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(
                Row(
                    float(rec["sweep_value"]),
                    rec["method"],
                    rec["metric"],
                    float(rec["mean"]),
                    float(rec["stderr"]),
                    int(rec["trials"]),
                )
            )
    curves = {}
    curve_path = in_dir / "curves.csv"
    if curve_path.is_file():
        raw = {}
        with curve_path.open(encoding="utf-8", newline="") as fh:
            for rec in csv.DictReader(fh):
                raw.setdefault(rec["curve"], []).append((float(rec["x"]), float(rec["mean"]), float(rec["stderr"])))
        curves = {k: tuple(np.array(c) for c in zip(*v)) for k, v in raw.items()}
    config = None
    cfg_path = in_dir / "config.json"
    if cfg_path.is_file():
        config = load_config(cfg_path)
    x_label = _x_label(config.sweep.axis) if config is not None else ""
    return SweepResult(config, rows, curves, x_label)
