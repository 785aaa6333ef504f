import logging
from dataclasses import dataclass

from ncdw.core.errors import RecordRejected, ValidationError
from ncdw.core.text import normalize_text
from ncdw.core.time_key import TimeKey, day_start_key
from ncdw.core.types import geo_tuple
from ncdw.ingest.units import (
    parse_quantity, parse_result, parse_timestamp, pm25_index, to_celsius, to_millimetres, to_percent,
)
from ncdw.linkage.link_key import LinkKey, make_pik

logger = logging.getLogger(__name__)

# Direct identifiers that must never survive standardization
IDENTIFYING_FIELDS = frozenset(("patient_name", "name", "dob", "national_id", "nid", "address", "phone"))

TEST_RESULT_PAYLOAD = (
    "test_code", "test_name", "result_positive", "result_value", "age_band", "gender",
    "provider", "lab", "diagnosis", "source_id", "source_kind",
)
AMBIENT_PAYLOAD = (
    "density", "avg_rainfall", "humidity", "air_pollutants", "temperature", "source_id", "source_kind",
)


@dataclass(frozen=True)
class StagedRecord:
    """
    Cleaned, standardized and pseudonymized row waiting in staging.
    Units are canonical (degC, mm, %, persons/km2) and no direct identifier remains.
    """
    record_type: str
    time: int
    geo: tuple
    payload: dict
    pik: str | None = None

    def __post_init__(self):
        if self.record_type not in ("test_result", "ambient"):
            raise ValidationError(f"unknown record type {self.record_type!r}")
        leaked = IDENTIFYING_FIELDS.intersection(self.payload)
        if leaked:
            raise ValidationError(f"staged record carries identifying fields: {', '.join(sorted(leaked))}")
        expected = TEST_RESULT_PAYLOAD if self.record_type == "test_result" else AMBIENT_PAYLOAD
        if set(self.payload) != set(expected):
            raise ValidationError(f"staged {self.record_type} payload must hold exactly {', '.join(expected)}")
        if self.record_type == "test_result" and not self.pik:
            raise ValidationError("test result staged without a PIK")
        TimeKey(self.time)

    @property
    def dedup_key(self):
        if self.record_type == "test_result":
            return (self.pik, self.time, self.payload["test_code"])
        return (self.time, self.geo)

    def to_json(self):
        return {
            "record_type": self.record_type,
            "pik": self.pik,
            "time": self.time,
            "geo": list(self.geo),
            "payload": self.payload,
        }

    @classmethod
    def from_json(cls, document):
        return cls(
            record_type=document["record_type"],
            time=int(document["time"]),
            geo=tuple(document["geo"]),
            payload=dict(document["payload"]),
            pik=document.get("pik"),
        )


def _optional_quantity(fields, name):
    raw = fields.get(name, "")
    if not raw.strip():
        return None
    return parse_quantity(raw)


def _measure(fields, descriptor, name, convert):
    quantity = _optional_quantity(fields, name)
    if quantity is None:
        return None
    value, unit = quantity
    return round(convert(value, unit or normalize_text(descriptor.unit_for(name))), 6)


class Standardizer:
    """
    Standardization rules for one source: timestamps to UTC time keys,
    measurements to canonical units, test names to canonical codes, and
    patient identity to PIK + age band + gender.
    """
    def __init__(self, descriptor, code_map=None, secret=None):
        self.descriptor = descriptor
        self.code_map = {normalize_text(term): code for term, code in (code_map or {}).items()}
        self.canonical_codes = frozenset(self.code_map.values())
        self.secret = secret
        if descriptor.record_type == "test_result" and secret is None:
            raise ValidationError(f"source '{descriptor.source_id}' produces patient data and needs a link key")

    def standardize(self, raw):
        """Turn one RawRecord into (StagedRecord, LinkKey or None)"""
        fields = raw.fields
        geo = geo_tuple(fields.get("city", ""), fields.get("upazila", ""),
                        fields.get("district", ""), fields.get("division", ""))
        if self.descriptor.record_type == "test_result":
            return self._test_result(fields, geo)
        return self._ambient(fields, geo), None

    def _test_result(self, fields, geo):
        moment = parse_timestamp(fields["test_time"])
        time = TimeKey.from_calendar(moment, self.descriptor.zone_offset_minutes)

        test_name = normalize_text(fields["test_name"])
        code = self.code_map.get(test_name)
        if code is None and fields["test_name"].strip() in self.canonical_codes:
            code = fields["test_name"].strip()
        if code is None:
            raise RecordRejected("unmapped-code", fields["test_name"])

        age, _ = parse_quantity(fields["age"])
        if not 0 <= age <= 130:
            raise RecordRejected("range", f"age {age}")
        link_key = LinkKey.from_patient(fields["patient_name"], age, fields["gender"])
        dob_or_age = fields.get("dob", "").strip() or fields["age"]
        pik = make_pik(link_key, dob_or_age, self.secret)

        result_value = _optional_quantity(fields, "result_value")
        payload = {
            "test_code": code,
            "test_name": test_name,
            "result_positive": parse_result(fields["result"]),
            "result_value": None if result_value is None else result_value[0],
            "age_band": link_key.age_band,
            "gender": link_key.gender.value,
            "provider": normalize_text(fields.get("provider") or self.descriptor.source_id),
            "lab": normalize_text(fields.get("lab") or "unspecified"),
            "diagnosis": normalize_text(fields.get("diagnosis") or "unspecified"),
            "source_id": self.descriptor.source_id,
            "source_kind": self.descriptor.kind.value,
        }
        return StagedRecord("test_result", time.epoch_seconds, geo, payload, pik.value), link_key

    def _ambient(self, fields, geo):
        moment = parse_timestamp(fields["obs_date"])
        time = day_start_key(moment.date(), self.descriptor.zone_offset_minutes)

        air = _optional_quantity(fields, "air_pollutants")
        if air is not None:
            air_index = air[0]
        else:
            pm25 = _optional_quantity(fields, "pm25")
            air_index = None if pm25 is None else float(pm25_index(pm25[0]))
        density = _optional_quantity(fields, "density")
        if density is not None and density[0] < 0:
            raise RecordRejected("range", f"density {density[0]}")

        payload = {
            "density": None if density is None else density[0],
            "avg_rainfall": _measure(fields, self.descriptor, "rainfall", to_millimetres),
            "humidity": _measure(fields, self.descriptor, "humidity", to_percent),
            "air_pollutants": air_index,
            "temperature": _measure(fields, self.descriptor, "temperature", to_celsius),
            "source_id": self.descriptor.source_id,
            "source_kind": self.descriptor.kind.value,
        }
        if payload["avg_rainfall"] is not None and payload["avg_rainfall"] < 0:
            raise RecordRejected("range", f"rainfall {payload['avg_rainfall']}")
        return StagedRecord("ambient", time.epoch_seconds, geo, payload)


def standardize(raw, descriptor, secret=None, code_map=None):
    """
    Standardize one raw record for a source.

    Args:
        raw: RawRecord produced by parse_batch
        descriptor: SourceDescriptor of the source
        secret: link key bytes, required for patient data
        code_map: source term -> canonical code mapping

    Returns:
        StagedRecord
    """
    record, _ = Standardizer(descriptor, code_map, secret).standardize(raw)
    return record
