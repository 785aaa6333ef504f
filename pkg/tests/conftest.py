import numpy as np
import pandas as pd
import pytest

from ncdw.ingest.descriptor import SourceDescriptor
from ncdw.ingest.staging import StagingStore
from ncdw.ingest.wrapper import SourceWrapper
from ncdw.warehouse.loader import load_pending
from ncdw.warehouse.store import WarehouseStore


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def secret():
    return bytes(range(32))


# Five tests over two districts (one patient retested) and three weather days
HOSPITAL = SourceDescriptor(
    source_id="dmch",
    kind="hospital",
    field_map={"name": "patient_name", "age": "age", "sex": "gender", "time": "test_time", "test": "test_name",
               "result": "result", "district": "district", "lab": "lab"},
)
WEATHER = SourceDescriptor(
    source_id="bmd",
    kind="meteorology",
    field_map={"date": "obs_date", "district": "district", "rain": "rainfall", "rh": "humidity",
               "temp": "temperature"},
)
CODE_MAP = {"NS1 Antigen": "DENGUE_NS1", "Dengue IgM": "DENGUE_IGM", "CBC": "CBC"}

TESTS_CSV = (
    "name,age,sex,time,test,result,district,lab\n"
    "Sobuj Chowdhury,27,M,2022-08-01 10:00,NS1 Antigen,Positive,Dhaka,Central\n"
    "Rina Akter,34,F,2022-08-01 11:30,NS1 Antigen,negative,Dhaka,Central\n"
    "Sabuj Chaudhury,27,M,2022-08-05 09:00,NS1 Antigen,positive,Dhaka,Central\n"
    "Karim Uddin,8,M,2022-08-02 09:15,CBC,neg,Gazipur,North\n"
    "Nadia Islam,45,F,2022-09-10 16:20,Dengue IgM,positive,Gazipur,North\n"
).encode()

WEATHER_CSV = (
    "date,district,rain,rh,temp\n"
    "2022-08-01,Dhaka,12.5,81,31\n"
    "2022-08-02,Gazipur,4,75,30\n"
    "2022-08-05,Dhaka,0,70,29\n"
).encode()


@pytest.fixture
def staging(tmp_path, secret):
    staging = StagingStore(tmp_path / "staging")
    SourceWrapper(HOSPITAL, secret=secret, code_map=CODE_MAP).run(TESTS_CSV, staging)
    SourceWrapper(WEATHER).run(WEATHER_CSV, staging)
    return staging


@pytest.fixture
def store(tmp_path, staging):
    store = WarehouseStore(tmp_path / "warehouse", 360)
    load_pending(staging, store)
    return store


BULK_DISTRICTS = ("dhaka", "gazipur", "khulna", "sylhet", "rajshahi")
BULK_CODES = ("DENGUE_NS1", "DENGUE_IGM", "CBC", "MALARIA_RDT")
JAN_2022 = 1640995200


@pytest.fixture
def bulk_store(tmp_path):
    """
    Factory for a committed warehouse with `rows` random test facts (about a
    third of them sharing a patient) and one ambient fact per (district, day)
    pair used. Values are rounded to two decimals, with a few left null.
    """
    def build(rows, seed=0, name="bulk"):
        rng = np.random.default_rng(seed)
        store = WarehouseStore(tmp_path / name, 360)
        with store.writing():
            geo = [store.upsert_dimension("geography", {"city": d, "upazila": d, "district": d, "division": "dhaka"})
                   for d in BULK_DISTRICTS]
            attribute = [store.upsert_dimension("test_attribute", {"code": code, "test_name": code.lower()})
                         for code in BULK_CODES]
            patient = [store.upsert_dimension("patient", {"age_band": band, "gender": gender})
                       for band in range(0, 80, 10) for gender in ("male", "female")]
            keys = {
                "healthcare": [store.upsert_dimension("healthcare", {"provider": p}) for p in ("dmch", "popular dc")],
                "lab": [store.upsert_dimension("lab", {"lab_name": "central"})],
                "diagnosis": [store.upsert_dimension("diagnosis", {"diagnosis_name": "dengue fever"})],
                "source": [store.upsert_dimension("source", {"source_id": "dmch", "source_kind": "hospital"})],
            }
            values = np.round(rng.gamma(2.0, 40.0, size=rows), 2)
            values[rng.random(rows) < 0.05] = np.nan
            facts = pd.DataFrame({
                "pik": [f"{pik:016x}" for pik in rng.integers(1, max(2, rows // 3), size=rows)],
                "time": JAN_2022 + rng.integers(0, 365 * 86400, size=rows),
                "geo": rng.choice(geo, size=rows),
                "healthcare": rng.choice(keys["healthcare"], size=rows),
                "lab": keys["lab"][0],
                "attribute": rng.choice(attribute, size=rows),
                "patient": rng.choice(patient, size=rows),
                "diagnosis": keys["diagnosis"][0],
                "source": keys["source"][0],
                "result_value": values,
                "result_positive": rng.random(rows) < 0.3,
            })
            days = store.day_labels(facts["time"])
            for day in sorted(set(days)):
                store.upsert_dimension("time", {"day": day})
            pairs = facts.assign(day=days.to_numpy()).drop_duplicates(["geo", "day"])
            ambient = pd.DataFrame({
                "time": pairs["time"].to_numpy(),
                "geo": pairs["geo"].to_numpy(),
                "density": 1000.0,
                "avg_rainfall": np.round(rng.gamma(1.5, 6.0, size=len(pairs)), 1),
                "humidity": np.round(rng.uniform(55, 95, size=len(pairs)), 1),
                "air_pollutants": np.nan,
                "temperature": np.round(rng.uniform(18, 34, size=len(pairs)), 1),
                "pct_positive_dengue": np.nan,
            })
            store.append_facts("testresult", facts)
            store.append_facts("ambient", ambient)
            store.commit()
        return store
    return build
