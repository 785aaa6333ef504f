import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ncdw.core.errors import CapacityError, IntegrityError, ValidationError
from ncdw.core.surrogate import FIRST_KEY, LAST_KEY
from ncdw.core.time_key import MAX_EPOCH_SECONDS, TimeKey
from ncdw.core.types import GEO_LEVELS
from ncdw.warehouse.schema import DIMENSIONS, FACTS

logger = logging.getLogger(__name__)

DENGUE_CODES = ("DENGUE_NS1", "DENGUE_IGM", "DENGUE_IGG")


@dataclass
class LoadReport:
    batch_id: int
    staged: int = 0
    facts_loaded: int = 0
    dims_created: int = 0
    rejects: list = field(default_factory=list)
    skipped: bool = False

    @property
    def conserved(self):
        return self.staged == self.facts_loaded + len(self.rejects)

    def summary(self):
        if self.skipped:
            return f"batch {self.batch_id} already loaded; nothing to do"
        return (f"batch {self.batch_id}: {self.facts_loaded} facts loaded, {self.dims_created} dimension rows "
                f"created, {len(self.rejects)} rejected")


def positive_share(results):
    """
    Percentage of positive results.

    Args:
        results: iterable of booleans (one per test)

    Returns:
        float: share in [0, 100], or NaN when there are no tests
    """
    values = np.asarray(list(results), dtype=bool)
    if values.size == 0:
        return float("nan")
    return 100.0 * float(values.sum()) / float(values.size)


def national_positive_share(store, codes=DENGUE_CODES):
    """Whole-period share of positive tests among the given test codes"""
    wide = store.wide_frame("testresult")
    return positive_share(wide.loc[wide["code"].isin(codes), "result_positive"].to_numpy())


def refresh_positive_share(store, codes=DENGUE_CODES):
    """
    Recompute pct_positive_dengue on every ambient row from the test facts
    of the same geography and reporting day. Rows without tests get null.
    """
    ambient = store.fact("ambient")
    if len(ambient) == 0:
        return
    wide = store.wide_frame("testresult")
    tests = wide.loc[wide["code"].isin(codes), ["geo", "day", "result_positive"]]
    updated = ambient.copy()
    if len(tests) == 0:
        updated["pct_positive_dengue"] = np.nan
        store.replace_facts("ambient", updated)
        return
    shares = tests.groupby(["geo", "day"], sort=False)["result_positive"].agg(["sum", "count"])
    shares = (100.0 * shares["sum"] / shares["count"]).rename("share").reset_index()

    updated["day"] = store.day_labels(updated["time"]).to_numpy()
    updated = updated.merge(shares, on=["geo", "day"], how="left", sort=False)
    updated["pct_positive_dengue"] = updated["share"].round(6)
    store.replace_facts("ambient", updated.drop(columns=["day", "share"]))


def check_integrity(store):
    """
    Full-table checks over the warehouse.

    Returns:
        list: human-readable violations, empty when the store is consistent
    """
    violations = []
    for name, schema in DIMENSIONS.items():
        table = store.dimension(name)
        if len(table) == 0:
            continue
        keys = table["key"]
        if keys.duplicated().any():
            violations.append(f"dimension {name}: duplicate keys")
        if keys.min() < FIRST_KEY or keys.max() > LAST_KEY:
            violations.append(f"dimension {name}: key outside [{FIRST_KEY}, {LAST_KEY}]")
        if table.duplicated(subset=list(schema.natural_key)).any():
            violations.append(f"dimension {name}: duplicate natural keys")

    for name, schema in FACTS.items():
        facts = store.fact(name)
        if len(facts) == 0:
            continue
        for column, dim in schema.references.items():
            dangling = ~facts[column].isin(store.dimension(dim)["key"])
            if dangling.any():
                violations.append(f"fact {name}: {int(dangling.sum())} rows with unknown {dim} key in '{column}'")
        bad_time = (facts["time"] < 0) | (facts["time"] >= MAX_EPOCH_SECONDS)
        if bad_time.any():
            violations.append(f"fact {name}: {int(bad_time.sum())} rows with invalid time")
        days = set(store.day_labels(facts["time"]))
        missing_days = days.difference(store.dimension("time")["day"])
        if missing_days:
            violations.append(f"fact {name}: {len(missing_days)} days missing from the time dimension")

    ambient = store.fact("ambient")
    if len(ambient):
        if ambient.duplicated(subset=["time", "geo"]).any():
            violations.append("fact ambient: more than one row for a (day, geo) pair")
        pct = ambient["pct_positive_dengue"].dropna()
        if ((pct < 0) | (pct > 100)).any():
            violations.append("fact ambient: pct_positive_dengue outside [0, 100]")
    tests = store.fact("testresult")
    if len(tests) and not tests["pik"].str.fullmatch(r"[0-9a-f]{32}").all():
        violations.append("fact testresult: malformed PIK")
    return violations


def _resolve_test_result(store, record):
    payload = record.payload
    geo = dict(zip(GEO_LEVELS, record.geo))
    return {
        "pik": record.pik,
        "time": record.time,
        "geo": store.upsert_dimension("geography", geo),
        "healthcare": store.upsert_dimension("healthcare", {"provider": payload["provider"]}),
        "lab": store.upsert_dimension("lab", {"lab_name": payload["lab"]}),
        "attribute": store.upsert_dimension("test_attribute",
                                            {"code": payload["test_code"], "test_name": payload["test_name"]}),
        "patient": store.upsert_dimension("patient",
                                          {"age_band": payload["age_band"], "gender": payload["gender"]}),
        "diagnosis": store.upsert_dimension("diagnosis", {"diagnosis_name": payload["diagnosis"]}),
        "source": store.upsert_dimension("source", {"source_id": payload["source_id"],
                                                    "source_kind": payload["source_kind"]}),
        "result_value": payload["result_value"],
        "result_positive": bool(payload["result_positive"]),
    }


def _resolve_ambient(store, record):
    payload = record.payload
    store.upsert_dimension("source", {"source_id": payload["source_id"], "source_kind": payload["source_kind"]})
    row = {
        "time": record.time,
        "geo": store.upsert_dimension("geography", dict(zip(GEO_LEVELS, record.geo))),
        "pct_positive_dengue": None,
    }
    for measure in ("density", "avg_rainfall", "humidity", "air_pollutants", "temperature"):
        row[measure] = payload[measure]
    return row


def _merge_ambient(store, rows):
    """One ambient row per (time, geo): newer rows replace older ones"""
    incoming = pd.DataFrame(rows)
    incoming = incoming.drop_duplicates(subset=["time", "geo"], keep="last")
    current = store.fact("ambient")
    keys = pd.MultiIndex.from_frame(incoming[["time", "geo"]])
    kept = current[~pd.MultiIndex.from_frame(current[["time", "geo"]]).isin(keys)] if len(current) else current
    merged = pd.concat([kept, incoming.loc[:, list(FACTS["ambient"].columns)]], ignore_index=True)
    store.replace_facts("ambient", merged.sort_values(["time", "geo"], kind="stable"))


def load_batch(batch_id, staging, store, codes=DENGUE_CODES):
    """
    Merge-load one staged batch into the warehouse.

    Every staged record becomes one fact row with resolved dimension keys.
    The load is atomic: on any failure the store rolls back to its last
    committed state. Loading an already loaded batch does nothing.

    Args:
        batch_id: staged batch id
        staging: StagingStore holding the batch
        store: WarehouseStore to load into
        codes: test codes whose positivity feeds pct_positive_dengue

    Returns:
        LoadReport
    """
    if batch_id in store.loaded_batches:
        logger.info("batch %d already loaded into %s", batch_id, store.root)
        return LoadReport(batch_id, skipped=True)

    batch = staging.read_batch(batch_id)
    report = LoadReport(batch_id, staged=batch.staged)
    with store.writing():
        dims_before = sum(store.dimension_row_counts().values())
        try:
            tests, ambient = [], []
            for position, record in enumerate(batch.records):
                try:
                    store.upsert_dimension("time", {"day": TimeKey(record.time).day(store.reporting_offset_minutes)})
                    if record.record_type == "test_result":
                        tests.append(_resolve_test_result(store, record))
                    else:
                        ambient.append(_resolve_ambient(store, record))
                except CapacityError:
                    raise
                except ValidationError as e:
                    report.rejects.append((position, str(e)))

            if tests:
                store.append_facts("testresult", pd.DataFrame(tests))
            if ambient:
                _merge_ambient(store, ambient)
            refresh_positive_share(store, codes)

            violations = check_integrity(store)
            if violations:
                raise IntegrityError(f"batch {batch_id} breaks warehouse integrity: {violations[0]}")

            report.facts_loaded = len(tests) + len(ambient)
            report.dims_created = sum(store.dimension_row_counts().values()) - dims_before
            store.commit(loaded_batch=batch_id)
        except Exception:
            store.rollback()
            raise

    if report.rejects:
        logger.warning("batch %d: %d staged records could not be loaded", batch_id, len(report.rejects))
    logger.info(report.summary())
    return report


def load_pending(staging, store, codes=DENGUE_CODES):
    """Load every staged batch not yet in the warehouse, in id order"""
    return [load_batch(batch_id, staging, store, codes)
            for batch_id in staging.batch_ids() if batch_id not in store.loaded_batches]


def compact(store):
    """Merge each fact table's segment files into one"""
    with store.writing():
        store.compact()
