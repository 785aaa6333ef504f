import logging
from dataclasses import dataclass, field

import pandas as pd

from ncdw.core.errors import InsufficientHistoryError, ValidationError
from ncdw.datamart.series import MonthlySeries, month_label

logger = logging.getLogger(__name__)

DEFAULT_K = 1.5
DEFAULT_BASELINE_WINDOW = 12


@dataclass(frozen=True)
class MonthCheck:
    month: tuple
    positives: int
    baseline_mean: float
    baseline_std: float
    threshold: float
    flagged: bool


@dataclass(frozen=True)
class OutbreakRun:
    """A maximal run of consecutive flagged months"""
    months: tuple
    onset: tuple
    peak: tuple
    peak_positives: int


@dataclass
class OutbreakReport:
    k: float
    baseline_window: int
    checks: list = field(default_factory=list)
    runs: list = field(default_factory=list)

    @property
    def flagged(self):
        return [check.month for check in self.checks if check.flagged]

    @property
    def headline(self):
        """The run with the highest peak (earliest on ties), or None"""
        if not self.runs:
            return None
        return max(self.runs, key=lambda run: (run.peak_positives, -self.runs.index(run)))

    def to_frame(self):
        onsets = {run.onset for run in self.runs}
        peaks = {run.peak for run in self.runs}
        return pd.DataFrame({
            "month": [month_label(*check.month) for check in self.checks],
            "positives": [check.positives for check in self.checks],
            "baseline_mean": [check.baseline_mean for check in self.checks],
            "baseline_std": [check.baseline_std for check in self.checks],
            "threshold": [check.threshold for check in self.checks],
            "flagged": [check.flagged for check in self.checks],
            "onset": [check.month in onsets for check in self.checks],
            "peak": [check.month in peaks for check in self.checks],
        })


def _exceeds(value, mean, std, k):
    # tolerance scales with the data
    tolerance = 1e-9 * max(abs(mean), abs(value), 1.0)
    return value - mean > k * std + tolerance


def detect_outbreak(series, k=DEFAULT_K, baseline_window=DEFAULT_BASELINE_WINDOW):
    """
    Flag months whose positives exceed mean + k * stddev of the trailing
    baseline window (population standard deviation), and group flagged
    months into runs with an onset (first month) and a peak (largest count).

    Args:
        series: MonthlySeries, or a plain sequence of monthly counts
        k: threshold multiplier
        baseline_window: number of preceding months forming the baseline

    Returns:
        OutbreakReport
    """
    if not isinstance(series, MonthlySeries):
        series = MonthlySeries.from_counts(list(series))
    if k < 0 or baseline_window < 1:
        raise ValidationError("outbreak detection needs k >= 0 and a baseline window of at least one month")
    if len(series) <= baseline_window:
        raise InsufficientHistoryError(
            f"outbreak detection needs more than {baseline_window} months, got {len(series)}"
        )

    values = series.positives.astype("float64")
    report = OutbreakReport(k=k, baseline_window=baseline_window)
    for i in range(baseline_window, len(values)):
        baseline = values[i - baseline_window:i]
        mean = float(baseline.mean())
        std = float(baseline.std(ddof=0))
        report.checks.append(MonthCheck(
            month=series.months[i],
            positives=int(series.positives[i]),
            baseline_mean=mean,
            baseline_std=std,
            threshold=mean + k * std,
            flagged=_exceeds(values[i], mean, std, k),
        ))

    run = []
    for check in report.checks + [None]:
        if check is not None and check.flagged:
            run.append(check)
            continue
        if run:
            peak = max(run, key=lambda item: (item.positives, -run.index(item)))
            report.runs.append(OutbreakRun(
                months=tuple(item.month for item in run),
                onset=run[0].month,
                peak=peak.month,
                peak_positives=peak.positives,
            ))
            run = []

    headline = report.headline
    if headline is not None:
        logger.info("outbreak: onset %s, peak %s (%d positives)",
                    month_label(*headline.onset), month_label(*headline.peak), headline.peak_positives)
    return report
