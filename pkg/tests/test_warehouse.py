import math

import pandas as pd
import pytest
from pandas.testing import assert_frame_equal

from ncdw.core.errors import IntegrityError, QueryError, StorageError, UnknownBatchError, ValidationError
from ncdw.warehouse import loader
from ncdw.warehouse.loader import (
    check_integrity, compact, load_batch, load_pending, national_positive_share, positive_share,
)
from ncdw.warehouse.query import parse_predicate, scan, scan_frame
from ncdw.warehouse.schema import DIMENSIONS, FACTS
from ncdw.warehouse.store import LOCK_FILE, MANIFEST, WarehouseStore


def test_load_reports(tmp_path, staging):
    store = WarehouseStore(tmp_path / "warehouse", 360)
    reports = load_pending(staging, store)
    assert [report.facts_loaded for report in reports] == [5, 3]
    assert reports[0].dims_created == 18
    assert reports[1].dims_created == 1
    assert all(report.conserved for report in reports)
    assert store.loaded_batches == [1, 2]


def test_loading_twice_is_a_no_op(store, staging):
    report = load_batch(1, staging, store)
    assert report.skipped
    assert len(store.fact("testresult")) == 5
    assert load_pending(staging, store) == []


def test_unknown_batch(store, staging):
    with pytest.raises(UnknownBatchError):
        load_batch(99, staging, store)


def test_dimensions_and_keys(store):
    counts = store.dimension_row_counts()
    assert counts["geography"] == 2
    assert counts["time"] == 4
    assert counts["patient"] == 4
    assert counts["test_attribute"] == 3
    assert counts["source"] == 2
    assert store.lookup_key("geography", {"city": "", "upazila": "", "district": "DHAKA", "division": ""}) == 10000
    assert check_integrity(store) == []


def test_retests_share_a_pik(store):
    tests = store.fact("testresult")
    assert tests["pik"].nunique() == 4


def test_positive_share_per_day_and_geo(store):
    wide = store.wide_frame("ambient").set_index(["district", "day"])
    assert wide.loc[("dhaka", "2022-08-01"), "pct_positive_dengue"] == pytest.approx(50.0)
    assert wide.loc[("dhaka", "2022-08-05"), "pct_positive_dengue"] == pytest.approx(100.0)
    assert math.isnan(wide.loc[("gazipur", "2022-08-02"), "pct_positive_dengue"])
    assert national_positive_share(store) == pytest.approx(75.0)


def test_positive_share_of_national_totals():
    results = [True] * 16510 + [False] * (70049 - 16510)
    assert positive_share(results) == pytest.approx(23.57, abs=0.005)
    assert math.isnan(positive_share([]))


def test_upsert_dimension_is_idempotent(tmp_path):
    store = WarehouseStore(tmp_path / "fresh")
    dhanmondi = {"city": "Dhaka", "upazila": "Dhanmondi", "district": "Dhaka", "division": "Dhaka"}
    assert store.upsert_dimension("geography", dhanmondi) == 10000
    assert store.upsert_dimension("geography", dict(dhanmondi, city=" DHAKA ")) == 10000
    assert store.upsert_dimension("geography", dict(dhanmondi, upazila="Mirpur")) == 10001


def test_reopen_yields_identical_tables(tmp_path, store):
    reopened = WarehouseStore(tmp_path / "warehouse")
    assert reopened.reporting_offset_minutes == 360
    for name in ("testresult", "ambient"):
        assert_frame_equal(store.fact(name), reopened.fact(name))
    assert reopened.dimension_row_counts() == store.dimension_row_counts()


def test_reporting_offset_is_fixed_once_data_exists(tmp_path, store):
    with pytest.raises(ValidationError):
        WarehouseStore(tmp_path / "warehouse", 0)


def test_failed_load_rolls_back(tmp_path, staging, monkeypatch):
    store = WarehouseStore(tmp_path / "warehouse", 360)
    monkeypatch.setattr(loader, "check_integrity", lambda _: ["dimension geography: duplicate keys"])
    with pytest.raises(IntegrityError):
        load_batch(1, staging, store)
    assert len(store.fact("testresult")) == 0
    assert store.loaded_batches == []
    assert not (tmp_path / "warehouse" / MANIFEST).exists()
    assert not (tmp_path / "warehouse" / LOCK_FILE).exists()


def test_single_writer_lock(store):
    (store.root / LOCK_FILE).write_text("123")
    with pytest.raises(StorageError):
        with store.writing():
            pass


def test_compact_keeps_content(tmp_path, store):
    before = store.fact("testresult").copy()
    compact(store)
    reopened = WarehouseStore(tmp_path / "warehouse")
    assert_frame_equal(before, reopened.fact("testresult"))


def test_scan_predicates(store):
    assert len(scan_frame(store, "testresult")) == 5
    assert len(scan_frame(store, "testresult", "district = dhaka")) == 3
    assert len(scan_frame(store, "testresult", "district = Khulna")) == 0
    assert len(scan_frame(store, "testresult", "result_positive = true and district = gazipur")) == 1
    assert len(scan_frame(store, "testresult", "month_of_year = 9")) == 1
    assert len(scan_frame(store, "testresult", "code in (DENGUE_NS1, CBC)")) == 4
    assert len(scan_frame(store, "testresult", {"district": "gazipur"})) == 2


def test_scan_columns_and_rows(store):
    rows = list(scan(store, "test_result", "lab_name = central", ["code", "day"]))
    assert rows[0] == {"code": "DENGUE_NS1", "day": "2022-08-01"}
    assert len(rows) == 3
    frame = scan_frame(store, "ambient", "temperature >= 30", ["district", "temperature"])
    assert isinstance(frame, pd.DataFrame)
    assert sorted(frame["district"]) == ["dhaka", "gazipur"]


def test_scan_errors(store):
    with pytest.raises(QueryError):
        scan_frame(store, "testresult", "colour = red")
    with pytest.raises(QueryError):
        scan_frame(store, "patients")
    with pytest.raises(QueryError):
        parse_predicate("district = dhaka or district = gazipur")


@pytest.mark.slow
def test_reopen_keeps_every_row_of_a_large_store(bulk_store):
    store = bulk_store(100_000, seed=2)
    reopened = WarehouseStore(store.root)
    assert len(reopened.fact("testresult")) == 100_000
    for name in FACTS:
        assert_frame_equal(reopened.fact(name), store.fact(name), check_exact=True)
    for name in DIMENSIONS:
        assert_frame_equal(reopened.dimension(name), store.dimension(name))
