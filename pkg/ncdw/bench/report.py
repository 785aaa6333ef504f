import html
import logging
from pathlib import Path

import pandas as pd

from ncdw.bench.harness import STRATEGIES
from ncdw.core.errors import StorageError
from ncdw.utils import charts
from ncdw.utils.artifact_manager import ArtifactManager

logger = logging.getLogger(__name__)

BENCH_ARTIFACTS = {
    "timings": "cube_timings.csv",
    "matrix": "cube_timings_matrix.csv",
    "checks": "bench_checks.csv",
    "html": "bench.html",
}
TIMING_COLUMNS = ["rows", "cube_size", "cuboids", "base_cells"] + [
    f"{strategy.value}_{stat}_s" for strategy in STRATEGIES for stat in ("median", "min", "max")
] + ["speedup", "equal"]


def timings_frame(result):
    """One row per (rows, cube size) with both strategies side by side"""
    rows = []
    for cell in result.cells:
        row = {"rows": cell.rows, "cube_size": cell.cube_size, "cuboids": cell.cuboids,
               "base_cells": cell.base_cells}
        for strategy in STRATEGIES:
            row[f"{strategy.value}_median_s"] = cell.median(strategy)
            row[f"{strategy.value}_min_s"] = cell.fastest(strategy)
            row[f"{strategy.value}_max_s"] = cell.slowest(strategy)
        row["speedup"] = cell.speedup
        row["equal"] = cell.equal
        rows.append(row)
    return pd.DataFrame(rows, columns=TIMING_COLUMNS)


def matrix_frame(result):
    """Aggregation size down, one median column per cube size and strategy"""
    frame = timings_frame(result)
    matrix = pd.DataFrame({"aggregation_size": sorted(frame["rows"].unique())})
    for size in result.plan.cube_sizes:
        part = frame.loc[frame["cube_size"] == size].set_index("rows")
        for strategy in STRATEGIES:
            column = f"cube_size_{size}_{strategy.value}_s"
            matrix[column] = matrix["aggregation_size"].map(part[f"{strategy.value}_median_s"])
    return matrix


def checks_frame(result):
    """One row per check with its verdict"""
    return pd.DataFrame(
        [{"check": check.name, "passed": check.passed, "detail": check.detail} for check in result.checks],
        columns=["check", "passed", "detail"],
    )


def read_timings(path):
    """Parse a cube_timings.csv back into a DataFrame"""
    try:
        frame = pd.read_csv(path)
    except OSError as e:
        raise StorageError(f"cannot read {path}: {e}") from e
    return frame.loc[:, TIMING_COLUMNS]


def render_html(result):
    frame = timings_frame(result)
    sections = ["<h1>Cube materialization benchmark</h1>",
                f"<p>{result.plan.repetitions} repetitions per cell, seed {result.plan.seed}; "
                "times are medians in seconds. Every lattice pair was compared cell for cell.</p>"]
    for size in result.plan.cube_sizes:
        part = frame.loc[frame["cube_size"] == size]
        png = charts.line_chart(
            [f"{rows:,}" for rows in part["rows"]],
            {strategy.value: part[f"{strategy.value}_median_s"].to_numpy() for strategy in STRATEGIES},
            f"Cube size {size}", "seconds",
        )
        sections.append(f"<h2>Cube size {size}</h2>")
        sections.append(f'<img src="{charts.data_uri(png)}" alt="cube size {size}">')
    checks = "".join(
        f"<li>{'passed' if check.passed else '<strong>FAILED</strong>'} {html.escape(check.name)}: "
        f"{html.escape(check.detail)}</li>"
        for check in result.checks
    )
    sections.append(f"<h2>Checks</h2><ul>{checks}</ul>")
    head = "".join(f"<th>{html.escape(column)}</th>" for column in frame.columns)
    body = "".join(
        "<tr>" + "".join(f"<td>{html.escape(f'{value:.4f}' if isinstance(value, float) else str(value))}</td>"
                         for value in row) + "</tr>"
        for row in frame.itertuples(index=False)
    )
    sections.append(f"<table><thead><tr>{head}</tr></thead><tbody>{body}</tbody></table>")
    return ("<!DOCTYPE html>\n<html><head><meta charset='utf-8'><title>Cube benchmark</title>"
            "<style>body{font-family:sans-serif;margin:2em}td,th{border:1px solid #ccc;padding:2px 6px}"
            "table{border-collapse:collapse}</style></head><body>\n" + "\n".join(sections) + "\n</body></html>\n")


def emit_report(result, out_dir):
    """
    Write cube_timings.csv, cube_timings_matrix.csv, bench_checks.csv and
    bench.html (one chart per cube size, then the checks).

    Returns:
        ArtifactManager holding the written paths
    """
    artifacts = out_dir if isinstance(out_dir, ArtifactManager) else ArtifactManager(Path(out_dir))
    for name, file_name in BENCH_ARTIFACTS.items():
        artifacts.register(name, file_name)
    artifacts.write("timings", timings_frame(result).to_csv(index=False, lineterminator="\n"))
    artifacts.write("matrix", matrix_frame(result).to_csv(index=False, lineterminator="\n"))
    artifacts.write("checks", checks_frame(result).to_csv(index=False, lineterminator="\n"))
    artifacts.write("html", render_html(result))
    logger.info("bench report written to %s", artifacts.out_dir)
    return artifacts
