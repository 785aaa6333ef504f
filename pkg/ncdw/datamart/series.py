import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from ncdw.core.errors import ValidationError

logger = logging.getLogger(__name__)


def month_label(year, month):
    return f"{year:04d}-{month:02d}"


def parse_month(label):
    year, month = str(label).split("-")[:2]
    return int(year), int(month)


def month_range(first, last):
    """Every (year, month) from first to last inclusive"""
    months = []
    year, month = first
    while (year, month) <= last:
        months.append((year, month))
        year, month = (year + 1, 1) if month == 12 else (year, month + 1)
    return months


@dataclass(frozen=True)
class MonthlySeries:
    """
    Month-aligned disease counts and environment readings.
    Missing environment readings are NaN; counts are integers.
    """
    months: tuple
    positives: np.ndarray
    tests: np.ndarray
    rainfall: np.ndarray
    humidity: np.ndarray
    temperature: np.ndarray

    def __post_init__(self):
        size = len(self.months)
        for field in ("positives", "tests", "rainfall", "humidity", "temperature"):
            values = np.asarray(getattr(self, field), dtype="int64" if field in ("positives", "tests") else "float64")
            if len(values) != size:
                raise ValidationError(f"series field '{field}' has {len(values)} values for {size} months")
            object.__setattr__(self, field, values)
        object.__setattr__(self, "months", tuple(tuple(month) for month in self.months))
        if np.any(self.positives > self.tests):
            raise ValidationError("positives exceed tests in some month")
        if np.any(self.positives < 0):
            raise ValidationError("negative positive count")

    def __len__(self):
        return len(self.months)

    @property
    def labels(self):
        return [month_label(year, month) for year, month in self.months]

    @classmethod
    def from_counts(cls, positives, tests=None, months=None, rainfall=None, humidity=None, temperature=None,
                    start=(2021, 1)):
        """Series from plain sequences; months default to consecutive months from `start`"""
        size = len(positives)
        if months is None:
            first = start
            last_index = first[0] * 12 + first[1] - 1 + size - 1
            months = month_range(first, (last_index // 12, last_index % 12 + 1)) if size else []
        missing = np.full(size, np.nan)
        return cls(
            months=tuple(months),
            positives=positives,
            tests=positives if tests is None else tests,
            rainfall=missing if rainfall is None else rainfall,
            humidity=missing if humidity is None else humidity,
            temperature=missing if temperature is None else temperature,
        )

    def to_frame(self):
        return pd.DataFrame({
            "month": self.labels,
            "tests": self.tests,
            "positives": self.positives,
            "rainfall_mm": self.rainfall,
            "humidity_pct": self.humidity,
            "temperature_c": self.temperature,
        })


def build_monthly_series(store):
    """
    Monthly series of a (mart) store: tests and positives counted per
    reporting-zone month, ambient readings averaged over every geography-day
    of the month. Months between the first and last observation with no
    data get zero counts and NaN readings.
    """
    tests = store.wide_frame("testresult")
    ambient = store.wide_frame("ambient")
    if len(tests) == 0 and len(ambient) == 0:
        return MonthlySeries.from_counts([], months=[])

    counts = tests.groupby("month", sort=True)["result_positive"].agg(["count", "sum"])
    readings = ambient.groupby("month", sort=True)[["avg_rainfall", "humidity", "temperature"]].mean()
    labels = sorted(set(counts.index).union(readings.index))
    months = month_range(parse_month(labels[0]), parse_month(labels[-1]))
    index = [month_label(year, month) for year, month in months]

    counts = counts.reindex(index, fill_value=0)
    readings = readings.reindex(index)
    return MonthlySeries(
        months=tuple(months),
        positives=counts["sum"].astype("int64").to_numpy(),
        tests=counts["count"].astype("int64").to_numpy(),
        rainfall=readings["avg_rainfall"].to_numpy(dtype="float64"),
        humidity=readings["humidity"].to_numpy(dtype="float64"),
        temperature=readings["temperature"].to_numpy(dtype="float64"),
    )
