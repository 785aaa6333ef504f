"""
Mart report emitter: CSV tables plus one self-contained HTML page.

Nothing in the output depends on the clock, so the same mart always gives
byte-identical files.
"""
import html
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from ncdw.core.errors import InsufficientHistoryError
from ncdw.datamart import analytics
from ncdw.datamart.outbreak import DEFAULT_BASELINE_WINDOW, DEFAULT_K, detect_outbreak
from ncdw.datamart.series import build_monthly_series, month_label
from ncdw.utils import charts
from ncdw.utils.artifact_manager import ArtifactManager

logger = logging.getLogger(__name__)

MART_ARTIFACTS = {
    "monthly": "monthly.csv",
    "age": "age.csv",
    "weekday": "weekday.csv",
    "correlation": "correlation.csv",
    "outbreak": "outbreak.csv",
    "html": "report.html",
}


@dataclass
class MartReport:
    name: str
    series: object
    age: pd.DataFrame
    weekday: pd.DataFrame
    correlation: pd.DataFrame
    outbreak: object
    outbreak_note: str = ""

    @property
    def headline(self):
        return None if self.outbreak is None else self.outbreak.headline


def build_mart_report(mart, name="mart", k=DEFAULT_K, baseline_window=DEFAULT_BASELINE_WINDOW):
    """
    Run every mart analytic. Short histories and flat series do not fail
    the report; the affected table carries an `undefined` status instead.
    """
    series = build_monthly_series(mart)
    correlation = analytics.correlation_table(series, strict=False)
    outbreak, note = None, ""
    try:
        outbreak = detect_outbreak(series, k=k, baseline_window=baseline_window)
    except InsufficientHistoryError as e:
        logger.warning("outbreak detection skipped: %s", e)
        note = str(e)
    return MartReport(
        name=name,
        series=series,
        age=analytics.age_distribution(mart),
        weekday=analytics.weekday_profile(mart),
        correlation=correlation,
        outbreak=outbreak,
        outbreak_note=note,
    )


def _outbreak_csv(report):
    if report.outbreak is not None:
        return report.outbreak.to_frame()
    return pd.DataFrame([{"month": "", "positives": "", "status": f"undefined: {report.outbreak_note}"}])


def _table(frame, float_format="{:.4f}"):
    head = "".join(f"<th>{html.escape(str(column))}</th>" for column in frame.columns)
    body = []
    for row in frame.itertuples(index=False):
        cells = []
        for value in row:
            text = float_format.format(value) if isinstance(value, (float, np.floating)) else str(value)
            cells.append(f"<td>{html.escape(text)}</td>")
        body.append(f"<tr>{''.join(cells)}</tr>")
    return f"<table><thead><tr>{head}</tr></thead><tbody>{''.join(body)}</tbody></table>"


def _image(png, alt):
    return f'<img src="{charts.data_uri(png)}" alt="{html.escape(alt)}">'


def render_html(report):
    series = report.series
    labels = series.labels
    flagged = set(report.outbreak.flagged) if report.outbreak is not None else set()
    markers = [i for i, month in enumerate(series.months) if month in flagged]

    sections = [f"<h1>{html.escape(report.name)} mart report</h1>"]
    headline = report.headline
    if headline is not None:
        sections.append(
            f"<p class='headline'>Outbreak onset {month_label(*headline.onset)}, "
            f"peak {month_label(*headline.peak)} ({headline.peak_positives} positive cases).</p>"
        )
    elif report.outbreak is None:
        sections.append(f"<p>Outbreak detection undefined: {html.escape(report.outbreak_note)}</p>")
    else:
        sections.append("<p>No month exceeded the outbreak threshold.</p>")

    if len(series):
        sections.append("<h2>Monthly cases</h2>")
        sections.append(_image(charts.line_chart(labels, {"positives": series.positives}, "Positive cases per month",
                                                 "cases", markers=markers), "monthly cases"))
        sections.append(_table(series.to_frame()))

    sections.append("<h2>Age distribution</h2>")
    if len(report.age):
        sections.append(_image(charts.bar_chart(list(report.age["band"]), report.age["share"].to_numpy(),
                                                "Cases per age band", "share of cases (%)"), "age distribution"))
    sections.append(_table(report.age))

    sections.append("<h2>Entries per weekday</h2>")
    sections.append(_table(report.weekday))

    sections.append("<h2>Environment correlation</h2>")
    for row in report.correlation.itertuples(index=False):
        if row.status != "ok":
            continue
        values = getattr(series, row.factor)
        present = ~np.isnan(values)
        sections.append(_image(charts.scatter_chart(values[present], series.positives[present],
                                                    f"Cases vs {row.factor} (r = {row.r:.2f})", row.factor,
                                                    "cases"), f"cases vs {row.factor}"))
    sections.append(_table(report.correlation))

    if report.outbreak is not None:
        sections.append("<h2>Outbreak timeline</h2>")
        sections.append(_table(report.outbreak.to_frame()))

    style = ("body{font-family:sans-serif;margin:2em;max-width:60em}"
             "table{border-collapse:collapse;margin:1em 0}td,th{border:1px solid #ccc;padding:2px 6px}"
             ".headline{font-weight:bold}")
    return (f"<!DOCTYPE html>\n<html><head><meta charset='utf-8'><title>{html.escape(report.name)}</title>"
            f"<style>{style}</style></head><body>\n" + "\n".join(sections) + "\n</body></html>\n")


def write_mart_report(report, out_dir, folder=""):
    """
    Write the report files, optionally into a sub-folder of the output.

    Returns:
        ArtifactManager holding the written paths
    """
    artifacts = out_dir if isinstance(out_dir, ArtifactManager) else ArtifactManager(out_dir)
    for name, file_name in MART_ARTIFACTS.items():
        artifacts.register(name, f"{folder}/{file_name}" if folder else file_name)
    artifacts.write_frame("monthly", report.series.to_frame())
    artifacts.write_frame("age", report.age)
    artifacts.write_frame("weekday", report.weekday)
    artifacts.write_frame("correlation", report.correlation)
    artifacts.write_frame("outbreak", _outbreak_csv(report))
    artifacts.write("html", render_html(report))
    logger.info("mart report written to %s", artifacts.out_dir)
    return artifacts
