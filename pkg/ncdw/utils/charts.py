"""
PNG charts for the HTML reports.

Figures are rendered off-screen (Agg) without timestamps in the PNG
metadata, so the same data always gives the same bytes.
"""
import base64
import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

FIGURE_SIZE = (7.0, 3.6)
DPI = 100


def render_png(fig):
    """Render a figure to PNG bytes and close it"""
    buffer = io.BytesIO()
    try:
        fig.savefig(buffer, format="png", dpi=DPI, bbox_inches="tight", metadata={"Software": None})
    finally:
        plt.close(fig)
    return buffer.getvalue()


def data_uri(png):
    return "data:image/png;base64," + base64.b64encode(png).decode("ascii")


def line_chart(labels, series, title, ylabel, markers=None):
    """
    Line chart over categorical x labels.

    Args:
        labels: x-axis labels
        series: mapping legend name -> values
        title: chart title
        ylabel: y-axis label
        markers: optional x positions to highlight (e.g. flagged months)

    Returns:
        bytes: PNG image
    """
    fig, ax = plt.subplots(figsize=FIGURE_SIZE)
    positions = range(len(labels))
    for name, values in series.items():
        ax.plot(positions, values, marker="o", markersize=3, label=name)
    for position in markers or ():
        ax.axvspan(position - 0.5, position + 0.5, color="tab:red", alpha=0.15)
    step = max(1, len(labels) // 12)
    ax.set_xticks(list(positions)[::step])
    ax.set_xticklabels(list(labels)[::step], rotation=45, ha="right", fontsize=8)
    ax.set_title(title)
    ax.set_ylabel(ylabel)
    if len(series) > 1:
        ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    return render_png(fig)


def bar_chart(labels, values, title, ylabel):
    fig, ax = plt.subplots(figsize=FIGURE_SIZE)
    ax.bar(range(len(labels)), values, color="tab:blue")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
    ax.set_title(title)
    ax.set_ylabel(ylabel)
    ax.grid(axis="y", alpha=0.3)
    return render_png(fig)


def scatter_chart(x, y, title, xlabel, ylabel):
    fig, ax = plt.subplots(figsize=(4.2, 3.6))
    ax.scatter(x, y, s=18, color="tab:green")
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(alpha=0.3)
    return render_png(fig)
