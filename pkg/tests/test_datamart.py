import math
from datetime import datetime, timezone

import numpy as np
import pytest
from pandas.testing import assert_frame_equal

from ncdw.core.errors import InsufficientHistoryError, UndefinedCorrelationError, ValidationError
from ncdw.datamart.analytics import (
    age_distribution, age_share_below, correlate_environment, correlation_table, monthly_distribution,
    weekday_profile,
)
from ncdw.datamart.mart import MartSpec, derive_mart, load_codes, open_mart
from ncdw.datamart.outbreak import detect_outbreak
from ncdw.datamart.report import MART_ARTIFACTS, build_mart_report, write_mart_report
from ncdw.datamart.series import MonthlySeries, build_monthly_series

# a quiet year, a quiet spring, then a surge peaking in August
SURGE = (
    [20, 22, 18, 21, 19, 20, 22, 18, 21, 19, 20, 22]
    + [20, 20, 20, 20, 20, 60, 120, 200, 150, 90, 25, 20]
)


@pytest.fixture
def mart(store):
    return derive_mart(MartSpec.dengue(), store)


def test_derive_mart_keeps_disease_facts(store, mart):
    assert len(mart.fact("testresult")) == 4
    assert len(mart.fact("ambient")) == 2
    assert mart.dimension_row_counts() == store.dimension_row_counts()
    assert set(mart.wide_frame("testresult")["code"]) == {"DENGUE_NS1", "DENGUE_IGM"}
    assert mart.reporting_offset_minutes == 360


def test_derive_mart_again_is_identical(store, mart):
    again = derive_mart(MartSpec.dengue(), store)
    for name in ("testresult", "ambient"):
        assert again.fact(name).equals(mart.fact(name))
    reopened = open_mart(store.root, "Dengue")
    assert len(reopened.fact("testresult")) == 4


def test_disjoint_codes_give_an_empty_mart(store):
    empty = derive_mart(MartSpec("hiv", {"HIV_ELISA"}), store)
    assert len(empty.fact("testresult")) == 0
    assert len(empty.fact("ambient")) == 0


def test_mart_spec_validation(tmp_path):
    with pytest.raises(ValidationError):
        MartSpec("Bad Name!", {"X"})
    with pytest.raises(ValidationError):
        MartSpec("empty", set())
    with pytest.raises(ValidationError):
        open_mart(tmp_path, "nothing")
    path = tmp_path / "codes.txt"
    path.write_text("DENGUE_NS1, DENGUE_IGM\n# serology\nDENGUE_IGG\n", encoding="utf-8")
    assert load_codes(path) == {"DENGUE_NS1", "DENGUE_IGM", "DENGUE_IGG"}


def test_monthly_series_of_a_mart(mart):
    series = build_monthly_series(mart)
    assert series.labels == ["2022-08", "2022-09"]
    assert series.tests.tolist() == [3, 1]
    assert series.positives.tolist() == [2, 1]
    assert series.rainfall[0] == pytest.approx(6.25)
    assert math.isnan(series.rainfall[1])


def test_single_record_mart(store):
    igm = derive_mart(MartSpec("igm", {"DENGUE_IGM"}), store)
    monthly = monthly_distribution(igm)
    assert monthly.to_dict(orient="records") == [{"month": "2022-09", "tests": 1, "positives": 1}]


def test_age_distribution(store):
    ages = age_distribution(store)
    assert ages["band"].tolist() == ["20-29", "40-49"]
    assert ages["count"].tolist() == [2, 1]
    assert age_share_below(ages, 40) == pytest.approx(200.0 / 3)
    wide = age_distribution(store, band_width=20)
    assert wide["band"].tolist() == ["20-39", "40-59"]
    with pytest.raises(ValidationError):
        age_distribution(store, band_width=15)


def test_weekday_profile(store):
    profile = weekday_profile(store).set_index("weekday")
    assert list(profile.index) == ["Sun", "Mon", "Tue", "Wed", "Thu", "Fri", "Sat"]
    assert int(profile["days"].sum()) == 41
    assert int(profile["entries"].sum()) == 5
    assert profile.loc["Mon", "days"] == 6
    assert profile.loc["Mon", "avg_per_day"] == pytest.approx(2 / 6)


def test_perfect_rainfall_correlation():
    positives = np.array([5, 8, 13, 21, 34, 55, 34, 21, 13, 8, 5, 3])
    series = MonthlySeries.from_counts(positives, rainfall=2.0 * positives + 10.0,
                                       humidity=np.linspace(60, 80, 12), temperature=np.arange(12.0))
    result = correlate_environment(series)
    assert result["r_rainfall"] == pytest.approx(1.0)
    assert -1.0 <= result["r_humidity"] <= 1.0


def test_constant_humidity_is_undefined():
    positives = np.arange(1, 13)
    series = MonthlySeries.from_counts(positives, rainfall=positives * 1.0, humidity=np.full(12, 70.0),
                                       temperature=np.arange(12.0))
    with pytest.raises(UndefinedCorrelationError) as caught:
        correlate_environment(series)
    assert caught.value.series_name == "humidity"
    table = correlation_table(series, strict=False).set_index("factor")
    assert table.loc["humidity", "status"].startswith("undefined")
    assert math.isnan(table.loc["humidity", "r"])
    assert table.loc["rainfall", "status"] == "ok"


def test_correlation_needs_enough_months():
    series = MonthlySeries.from_counts([1, 2, 3], rainfall=[1.0, 2.0, 4.0], humidity=[1.0, 3.0, 2.0],
                                       temperature=[3.0, 1.0, 2.0])
    with pytest.raises(InsufficientHistoryError):
        correlate_environment(series)


def test_flat_series_has_no_outbreak():
    report = detect_outbreak([50] * 24)
    assert report.flagged == []
    assert report.headline is None


def test_single_spike_is_flagged():
    counts = [10, 12] * 6 + [21]
    report = detect_outbreak(counts)
    assert report.flagged == [(2022, 1)]
    assert report.checks[0].baseline_mean == pytest.approx(11.0)
    assert report.checks[0].baseline_std == pytest.approx(1.0)
    assert report.checks[0].threshold == pytest.approx(12.5)


def test_surge_onset_and_peak():
    report = detect_outbreak(SURGE)
    assert report.flagged == [(2022, 6), (2022, 7), (2022, 8), (2022, 9)]
    assert report.headline.onset == (2022, 6)
    assert report.headline.peak == (2022, 8)
    assert report.headline.peak_positives == 200
    frame = report.to_frame()
    assert frame.loc[frame["onset"], "month"].tolist() == ["2022-06"]
    assert frame.loc[frame["peak"], "month"].tolist() == ["2022-08"]


def test_threshold_multiplier_changes_flags():
    strict = detect_outbreak(SURGE, k=3.0)
    assert set(strict.flagged) <= set(detect_outbreak(SURGE).flagged)
    assert (2022, 6) in strict.flagged


def test_short_history():
    with pytest.raises(InsufficientHistoryError):
        detect_outbreak([10] * 12)
    with pytest.raises(ValidationError):
        detect_outbreak([10] * 24, k=-1)


def test_mart_report_files(tmp_path, mart):
    report = build_mart_report(mart, name="dengue")
    assert report.outbreak is None
    assert "months" in report.outbreak_note
    artifacts = write_mart_report(report, tmp_path / "out", folder="dengue")
    assert artifacts.missing() == []
    for file_name in MART_ARTIFACTS.values():
        assert (tmp_path / "out" / "dengue" / file_name).exists()
    page = (tmp_path / "out" / "dengue" / "report.html").read_text(encoding="utf-8")
    assert "Outbreak detection undefined" in page
    assert "data:image/png;base64," in page
    correlation = (tmp_path / "out" / "dengue" / "correlation.csv").read_text(encoding="utf-8")
    assert correlation.count("undefined") == 3


def test_mart_report_is_byte_stable(tmp_path, mart):
    write_mart_report(build_mart_report(mart, name="dengue"), tmp_path / "one")
    write_mart_report(build_mart_report(mart, name="dengue"), tmp_path / "two")
    for file_name in MART_ARTIFACTS.values():
        assert (tmp_path / "one" / file_name).read_bytes() == (tmp_path / "two" / file_name).read_bytes()


def _reporting_day(seconds):
    return datetime.fromtimestamp(int(seconds) + 360 * 60, tz=timezone.utc).date().isoformat()


def test_mart_rows_match_a_brute_force_filter(bulk_store):
    store = bulk_store(10_000, seed=4)
    codes = {"DENGUE_NS1", "DENGUE_IGM"}
    mart = derive_mart(MartSpec("dengue", frozenset(codes)), store)

    attributes = store.dimension("test_attribute")
    code_of = dict(zip(attributes["key"], attributes["code"]))
    facts = store.fact("testresult")
    kept = [row for row, attribute in enumerate(facts["attribute"]) if code_of[attribute] in codes]
    assert 0 < len(kept) < len(facts)
    columns = list(facts.columns)
    assert_frame_equal(
        mart.fact("testresult").sort_values(columns).reset_index(drop=True),
        facts.iloc[kept].sort_values(columns).reset_index(drop=True),
    )

    pairs = {(geo, _reporting_day(time)) for geo, time in zip(facts["geo"].iloc[kept], facts["time"].iloc[kept])}
    ambient = store.fact("ambient")
    keep = [(geo, _reporting_day(time)) in pairs for geo, time in zip(ambient["geo"], ambient["time"])]
    columns = list(ambient.columns)
    assert_frame_equal(
        mart.fact("ambient").sort_values(columns).reset_index(drop=True),
        ambient.loc[keep].sort_values(columns).reset_index(drop=True),
    )
