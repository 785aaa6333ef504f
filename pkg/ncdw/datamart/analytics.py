"""Descriptive analytics over a disease mart: environment correlation and distributions."""
import logging
from datetime import date, timedelta

import numpy as np
import pandas as pd
from scipy import stats

from ncdw.core.errors import InsufficientHistoryError, UndefinedCorrelationError, ValidationError

logger = logging.getLogger(__name__)

MIN_CORRELATION_MONTHS = 6
ENVIRONMENT_FACTORS = ("rainfall", "humidity", "temperature")
# Sunday first, as hospital weekly reports list them
WEEK_ORDER = ("Sun", "Mon", "Tue", "Wed", "Thu", "Fri", "Sat")


def _pearson(x, y, x_name, y_name):
    if np.ptp(x) == 0:
        raise UndefinedCorrelationError(x_name)
    if np.ptp(y) == 0:
        raise UndefinedCorrelationError(y_name)
    result = stats.pearsonr(x, y)
    return float(np.clip(result.statistic, -1.0, 1.0)), float(result.pvalue)


def correlation_table(series, min_months=MIN_CORRELATION_MONTHS, strict=True):
    """
    Pearson correlation of monthly positives against each environment
    series, using the months where that reading is present.

    Args:
        series: MonthlySeries
        min_months: fewest aligned months accepted
        strict: raise on an undefined factor; otherwise the factor gets
            r = NaN and the reason in `status`

    Returns:
        DataFrame with factor, r, p_value, months and status
    """
    rows = []
    positives = series.positives.astype("float64")
    for factor in ENVIRONMENT_FACTORS:
        values = getattr(series, factor)
        present = ~np.isnan(values)
        months = int(present.sum())
        try:
            if months < min_months:
                raise InsufficientHistoryError(
                    f"correlation needs at least {min_months} months of {factor}, got {months}"
                )
            r, p_value = _pearson(positives[present], values[present], "positives", factor)
        except (InsufficientHistoryError, UndefinedCorrelationError) as e:
            if strict:
                raise
            logger.warning("%s", e)
            rows.append({"factor": factor, "r": np.nan, "p_value": np.nan, "months": months,
                         "status": f"undefined: {e}"})
            continue
        rows.append({"factor": factor, "r": r, "p_value": p_value, "months": months, "status": "ok"})
    return pd.DataFrame(rows, columns=["factor", "r", "p_value", "months", "status"])


def correlate_environment(series, min_months=MIN_CORRELATION_MONTHS):
    """
    Correlate monthly positives with rainfall, humidity and temperature.

    Args:
        series: MonthlySeries
        min_months: fewest aligned months accepted

    Returns:
        dict: r_rainfall, r_humidity and r_temperature, each in [-1, 1]
    """
    table = correlation_table(series, min_months)
    return {f"r_{row.factor}": row.r for row in table.itertuples(index=False)}


def monthly_distribution(mart):
    """Tests and positive cases per reporting month"""
    tests = mart.wide_frame("testresult")
    if len(tests) == 0:
        return pd.DataFrame({"month": pd.Series(dtype="object"), "tests": pd.Series(dtype="int64"),
                             "positives": pd.Series(dtype="int64")})
    grouped = tests.groupby("month", sort=True)["result_positive"].agg(["count", "sum"])
    return pd.DataFrame({
        "month": grouped.index.to_numpy(),
        "tests": grouped["count"].astype("int64").to_numpy(),
        "positives": grouped["sum"].astype("int64").to_numpy(),
    })


def age_distribution(mart, band_width=10, positives_only=True):
    """
    Share of cases per age band.

    Args:
        mart: store whose tests are counted
        band_width: band size in years, a multiple of 10
        positives_only: count positive results only (cases)

    Returns:
        DataFrame with band, lower, upper, count and share (percent)
    """
    if band_width <= 0 or band_width % 10:
        raise ValidationError(f"age band width must be a positive multiple of 10 years, got {band_width}")
    tests = mart.wide_frame("testresult")
    if positives_only:
        tests = tests.loc[tests["result_positive"]]
    group = (tests["age_band"].astype("int64") * 10 // band_width).rename("group")
    counts = group.value_counts().sort_index()
    total = int(counts.sum())
    lower = counts.index.to_numpy() * band_width
    return pd.DataFrame({
        "band": [f"{low}-{low + band_width - 1}" for low in lower],
        "lower": lower,
        "upper": lower + band_width,
        "count": counts.to_numpy(dtype="int64"),
        "share": (100.0 * counts.to_numpy() / total) if total else np.zeros(len(counts)),
    })


def age_share_below(distribution, age):
    """Percent of cases in bands that end at or below `age`"""
    return float(distribution.loc[distribution["upper"] <= age, "share"].sum())


def weekday_profile(store, fact="testresult"):
    """
    Average number of entries per calendar day for each weekday, over
    every day from the first to the last day with data (days without
    entries count as zero).

    Returns:
        DataFrame with weekday, days, entries and avg_per_day, Sunday first
    """
    wide = store.wide_frame(fact)
    columns = ["weekday", "days", "entries", "avg_per_day"]
    if len(wide) == 0:
        return pd.DataFrame({column: [] for column in columns})
    per_day = wide.groupby("day").size()
    first, last = date.fromisoformat(per_day.index.min()), date.fromisoformat(per_day.index.max())
    calendar = [first + timedelta(days=offset) for offset in range((last - first).days + 1)]
    frame = pd.DataFrame({
        "weekday": [WEEK_ORDER[(day.weekday() + 1) % 7] for day in calendar],
        "entries": [int(per_day.get(day.isoformat(), 0)) for day in calendar],
    })
    grouped = frame.groupby("weekday")["entries"].agg(["count", "sum"]).reindex(list(WEEK_ORDER), fill_value=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        average = np.where(grouped["count"] > 0, grouped["sum"] / grouped["count"].where(grouped["count"] > 0, 1), 0.0)
    return pd.DataFrame({
        "weekday": list(WEEK_ORDER),
        "days": grouped["count"].astype("int64").to_numpy(),
        "entries": grouped["sum"].astype("int64").to_numpy(),
        "avg_per_day": average.astype("float64"),
    })
