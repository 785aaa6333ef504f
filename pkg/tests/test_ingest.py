import json
import os

import pytest

from ncdw.core.errors import ConfigError, ParseError, StorageError, ValidationError
from ncdw.ingest.descriptor import SourceDescriptor, load_code_map
from ncdw.ingest.parser import parse_batch
from ncdw.ingest.staging import StagingStore, deduplicate
from ncdw.ingest.standardize import StagedRecord, standardize
from ncdw.ingest.units import parse_quantity, pm25_index, to_celsius, to_millimetres, to_percent
from ncdw.ingest.wrapper import SourceWrapper, ingest_sources

HOSPITAL = SourceDescriptor(
    source_id="dmch",
    kind="hospital",
    field_map={"name": "patient_name", "age": "age", "sex": "gender", "time": "test_time", "test": "test_name",
               "result": "result", "district": "district"},
)
WEATHER = SourceDescriptor(
    source_id="bmd",
    kind="meteorology",
    field_map={"date": "obs_date", "district": "district", "rain": "rainfall", "rh": "humidity",
               "temp": "temperature"},
)
CODE_MAP = {"NS1 Antigen": "DENGUE_NS1", "Dengue IgM": "DENGUE_IGM", "CBC": "CBC"}

HOSPITAL_CSV = (
    "name,age,sex,time,test,result,district\n"
    "Sobuj Chowdhury,27,M,2022-08-01 10:00,NS1 Antigen,Positive,Dhaka\n"
    "Rina Akter,34,F,2022-08-01 11:30,Dengue IgM,negative,Dhaka\n"
    "Karim Uddin,8,M,2022-08-02 09:15,CBC,neg,Gazipur\n"
).encode()

WEATHER_CSV = (
    "date,district,rain,rh,temp\n"
    "2022-08-01,Dhaka,12.5mm,81,86 F\n"
    "2022-08-02,Dhaka,heavy,80,30\n"
    "2022-08-03,Dhaka,1.2cm,120,29.5\n"
).encode()


def test_parse_valid_file():
    parsed = parse_batch(HOSPITAL, HOSPITAL_CSV)
    assert len(parsed.records) == 3
    assert parsed.rejects == []
    assert parsed.records[0].fields["patient_name"] == "Sobuj Chowdhury"


def test_parse_rejects_non_numeric_rainfall():
    parsed = parse_batch(WEATHER, WEATHER_CSV)
    assert [(reject.row_number, reject.reason) for reject in parsed.rejects] == [(3, "type")]
    assert parsed.rows_in == 3


def test_parse_missing_header_column_is_fatal():
    with pytest.raises(ParseError):
        parse_batch(HOSPITAL, b"name,age,sex,time,test,result\nA,1,M,2022-01-01,CBC,neg\n")


def test_parse_wrong_column_count():
    data = HOSPITAL_CSV + b"Extra,1,M,2022-08-02 09:15,CBC,neg,Dhaka,surplus\n"
    parsed = parse_batch(HOSPITAL, data)
    assert parsed.rejects[-1].reason == "shape"


def test_parse_reads_paths(tmp_path):
    path = tmp_path / "tests.csv"
    path.write_bytes(HOSPITAL_CSV)
    assert len(parse_batch(HOSPITAL, path).records) == 3
    with pytest.raises(StorageError):
        parse_batch(HOSPITAL, tmp_path / "missing.csv")


def test_descriptor_requires_mandatory_fields():
    with pytest.raises(ConfigError):
        SourceDescriptor("x", "hospital", {"name": "patient_name"})
    with pytest.raises(ConfigError):
        SourceDescriptor("x", "meteorology", {"date": "obs_date", "district": "district", "w": "wind"})


def test_unit_conversions():
    assert to_celsius(*parse_quantity("86 F")) == pytest.approx(30.0)
    assert to_celsius(*parse_quantity("303.15K")) == pytest.approx(30.0)
    assert to_millimetres(*parse_quantity("1.2cm")) == pytest.approx(12.0)
    assert to_millimetres(*parse_quantity("1 in")) == pytest.approx(25.4)
    assert to_percent(0.8, "fraction") == pytest.approx(80.0)
    assert pm25_index(12.0) == 50
    assert pm25_index(35.4) == 100
    assert pm25_index(600) == 500


def test_standardize_converts_and_pseudonymizes(secret):
    raw = parse_batch(HOSPITAL, HOSPITAL_CSV).records[0]
    record = standardize(raw, HOSPITAL, secret=secret, code_map=CODE_MAP)
    assert record.time == 1659326400
    assert record.payload["test_code"] == "DENGUE_NS1"
    assert record.payload["result_positive"] is True
    assert record.payload["age_band"] == 2
    assert record.payload["gender"] == "male"
    assert len(record.pik) == 32
    assert "Sobuj" not in json.dumps(record.to_json())


def test_standardize_ambient_units():
    raw = parse_batch(WEATHER, WEATHER_CSV).records[0]
    record = standardize(raw, WEATHER)
    assert record.payload["temperature"] == pytest.approx(30.0)
    assert record.payload["avg_rainfall"] == pytest.approx(12.5)
    assert record.payload["humidity"] == pytest.approx(81.0)
    assert record.geo == ("", "", "dhaka", "")


def test_patient_source_needs_a_key():
    raw = parse_batch(HOSPITAL, HOSPITAL_CSV).records[0]
    with pytest.raises(ValidationError):
        standardize(raw, HOSPITAL, code_map=CODE_MAP)


def test_wrapper_rejects_unmapped_codes_and_range(tmp_path, secret):
    staging = StagingStore(tmp_path / "staging")
    data = HOSPITAL_CSV + b"Nadia Islam,22,F,2022-08-03 08:00,Chikungunya PCR,positive,Dhaka\n"
    report = SourceWrapper(HOSPITAL, secret=secret, code_map=CODE_MAP).run(data, staging)
    assert report.staged == 3
    assert dict(report.reject_reasons) == {"unmapped-code": 1}
    assert report.conserved
    assert staging.rejects_path(report.batch_id).exists()

    weather = SourceWrapper(WEATHER).run(WEATHER_CSV, staging)
    assert dict(weather.reject_reasons) == {"type": 1, "range": 1}
    assert weather.staged == 1


def test_stage_batch_drops_exact_duplicates(tmp_path):
    records = []
    for day in range(95):
        records.append(_ambient(1659290400 + day * 86400))
    records += records[:5]
    staging = StagingStore(tmp_path)
    batch_id = staging.stage_batch(records, source_id="bmd")
    batch = staging.read_batch(batch_id)
    assert batch.staged == 95
    assert batch.deduplicated == 5
    assert len(deduplicate(records)) == 95


def test_stage_batch_failure_leaves_staging_unchanged(tmp_path, monkeypatch):
    staging = StagingStore(tmp_path)

    def fail(*args):
        raise OSError("disk full")

    monkeypatch.setattr(os, "replace", fail)
    with pytest.raises(StorageError):
        staging.stage_batch([_ambient(1659290400)], source_id="bmd")
    monkeypatch.undo()
    assert staging.batch_ids() == []
    assert list(tmp_path.iterdir()) == []


def test_staging_is_deterministic(tmp_path, secret):
    first = StagingStore(tmp_path / "one")
    second = StagingStore(tmp_path / "two")
    SourceWrapper(HOSPITAL, secret=secret, code_map=CODE_MAP).run(HOSPITAL_CSV, first)
    SourceWrapper(HOSPITAL, secret=secret, code_map=CODE_MAP).run(HOSPITAL_CSV, second)
    assert first.batch_path(1).read_bytes() == second.batch_path(1).read_bytes()


def test_ingest_sources_keeps_job_order(tmp_path, secret):
    staging = StagingStore(tmp_path)
    hospital = SourceWrapper(HOSPITAL, secret=secret, code_map=CODE_MAP)
    weather = SourceWrapper(WEATHER)
    reports = ingest_sources([(hospital, HOSPITAL_CSV), (weather, WEATHER_CSV)], staging, workers=2)
    assert [report.source_id for report in reports] == ["dmch", "bmd"]
    assert sorted(report.batch_id for report in reports) == [1, 2]


def test_load_code_map(tmp_path):
    path = tmp_path / "codes.tsv"
    path.write_text("source_term\tcode\n# comment\nNS1  antigen\tDENGUE_NS1\n", encoding="utf-8")
    assert load_code_map(path) == {"ns1 antigen": "DENGUE_NS1"}


def _ambient(time):
    payload = {"density": None, "avg_rainfall": 3.0, "humidity": 70.0, "air_pollutants": None,
               "temperature": 29.0, "source_id": "bmd", "source_kind": "meteorology"}
    return StagedRecord("ambient", time, ("", "", "dhaka", ""), payload)
