"""Artifact emission: text report, flat CSV, series files, figures.

The flat CSV is the machine-readable record: one row per computed
quantity, formatted with repr-exact floats so identical runs produce
byte-identical files.  Wall-clock timing never enters the CSV; it lives
only in the text report.
"""

from __future__ import annotations

import csv
import os
from typing import Dict

import numpy as np

from .experiments import ExperimentResult, FigureSpec, SeriesSpec

__all__ = ["write_report", "write_series", "render_figure"]


def _fmt(value) -> str:
    """repr-exact decimal for floats, plain digits for integral values."""
    v = float(value)
    if not np.isfinite(v):
        return "nan" if np.isnan(v) else ("inf" if v > 0 else "-inf")
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return format(v, ".17g")


def _param_text(value) -> str:
    if isinstance(value, float):
        return format(value, "g")
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_param_text(v) for v in value) + "]"
    return repr(value) if isinstance(value, str) else str(value)


def write_series(series: SeriesSpec, path: str) -> None:
    names = list(series.columns)
    columns = [np.asarray(series.columns[n]) for n in names]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for row in zip(*columns):
            writer.writerow([_fmt(v) for v in row])


def render_figure(fig_spec: FigureSpec, series_map: Dict[str, SeriesSpec],
                  path: str) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for series_name, x_col, y_col, label in fig_spec.lines:
        cols = series_map[series_name].columns
        ax.plot(np.asarray(cols[x_col]), np.asarray(cols[y_col]), label=label)
    if fig_spec.logx:
        ax.set_xscale("log")
    if fig_spec.logy:
        ax.set_yscale("log")
    ax.set_title(fig_spec.title)
    ax.set_xlabel(fig_spec.xlabel)
    ax.set_ylabel(fig_spec.ylabel)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _verdict_line(v) -> str:
    tag = "PASS" if v.passed else "FAIL"
    rel = "==" if v.equality else ">="
    return (
        f"[{tag}] {v.name}: {_fmt(v.lhs)} {rel} {_fmt(v.rhs)} "
        f"(margin {_fmt(v.margin)}, tolerance {_fmt(v.tolerance)})"
    )


def _write_text_report(result: ExperimentResult, path: str) -> None:
    lines = [f"experiment: {result.name}"]
    lines.append(f"runtime_seconds: {result.runtime_seconds:.3f}")
    lines.append("")
    lines.append("parameters:")
    for k, v in result.params.items():
        lines.append(f"  {k} = {_param_text(v)}")
    lines.append("")
    lines.append("metrics:")
    for k, v in result.metrics.items():
        lines.append(f"  {k} = {_fmt(v)}")
    lines.append("")
    lines.append("verdicts:")
    for v in result.verdicts:
        lines.append("  " + _verdict_line(v))
    lines.append("")
    n_pass = sum(1 for v in result.verdicts if v.passed)
    status = "PASS" if result.passed else "FAIL"
    lines.append(f"summary: {status} ({n_pass}/{len(result.verdicts)} verdicts)")
    lines.append("")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines))


def _write_csv_report(result: ExperimentResult, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["experiment", "kind", "name", "value"])
        for k, v in result.metrics.items():
            writer.writerow([result.name, "metric", k, _fmt(v)])
        for v in result.verdicts:
            writer.writerow([result.name, "verdict_lhs", v.name, _fmt(v.lhs)])
            writer.writerow([result.name, "verdict_rhs", v.name, _fmt(v.rhs)])
            writer.writerow([result.name, "verdict_margin", v.name, _fmt(v.margin)])
            writer.writerow(
                [result.name, "verdict_tolerance", v.name, _fmt(v.tolerance)]
            )
            writer.writerow(
                [result.name, "verdict_passed", v.name, "1" if v.passed else "0"]
            )
        writer.writerow(
            [result.name, "summary", "all_passed", "1" if result.passed else "0"]
        )


def write_report(result: ExperimentResult, output_dir: str,
                 dump_paths: int = 0) -> str:
    """Write every artifact for one experiment run; returns output_dir."""
    os.makedirs(output_dir, exist_ok=True)
    _write_text_report(result, os.path.join(output_dir, "report.txt"))
    _write_csv_report(result, os.path.join(output_dir, "report.csv"))

    series_map = {s.name: s for s in result.series}
    if result.series:
        series_dir = os.path.join(output_dir, "series")
        os.makedirs(series_dir, exist_ok=True)
        for s in result.series:
            write_series(s, os.path.join(series_dir, f"{s.name}.csv"))
    if result.figures:
        fig_dir = os.path.join(output_dir, "figures")
        os.makedirs(fig_dir, exist_ok=True)
        for f in result.figures:
            render_figure(f, series_map, os.path.join(fig_dir, f"{f.name}.png"))
    if dump_paths > 0 and result.path_dump is not None:
        dump_dir = os.path.join(output_dir, "paths")
        os.makedirs(dump_dir, exist_ok=True)
        for i in range(dump_paths):
            dump = result.path_dump(i)
            write_series(
                dump, os.path.join(dump_dir, f"{result.name}_{i}.csv")
            )
    return output_dir
