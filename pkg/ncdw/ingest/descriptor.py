import csv
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from ncdw.core.errors import ConfigError, StorageError
from ncdw.core.text import normalize_text
from ncdw.core.time_key import DEFAULT_ZONE_OFFSET_MINUTES

logger = logging.getLogger(__name__)


class SourceKind(str, Enum):
    HOSPITAL = "hospital"
    DIAGNOSTIC_CENTER = "diagnostic_center"
    METEOROLOGY = "meteorology"
    ENVIRONMENT_AGENCY = "environment_agency"
    STATISTICS_BUREAU = "statistics_bureau"

    @property
    def record_type(self):
        if self in (SourceKind.HOSPITAL, SourceKind.DIAGNOSTIC_CENTER):
            return "test_result"
        return "ambient"


# Canonical fields every source of a record type must map
REQUIRED_FIELDS = {
    "test_result": ("patient_name", "age", "gender", "test_time", "test_name", "result"),
    "ambient": ("obs_date", "district"),
}

OPTIONAL_FIELDS = {
    "test_result": (
        "dob", "city", "upazila", "district", "division", "provider", "lab", "diagnosis",
        "result_value", "national_id", "address", "phone",
    ),
    "ambient": (
        "city", "upazila", "division", "density", "rainfall", "humidity", "temperature",
        "air_pollutants", "pm25",
    ),
}

NUMERIC_FIELDS = frozenset((
    "age", "result_value", "density", "rainfall", "humidity", "temperature", "air_pollutants", "pm25",
))

# Unit assumed when a value carries no unit suffix
DEFAULT_UNITS = {
    "temperature": "C",
    "rainfall": "mm",
    "humidity": "%",
}


@dataclass(frozen=True)
class SourceDescriptor:
    """
    Wrapper configuration for one data source: which columns map to which
    canonical fields, the source's zone offset, and its code map.
    """
    source_id: str
    kind: SourceKind
    field_map: dict
    zone_offset_minutes: int = DEFAULT_ZONE_OFFSET_MINUTES
    code_map_path: Path | None = None
    units: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kind", SourceKind(self.kind))
        if not self.source_id:
            raise ConfigError("source descriptor needs a source_id")
        known = set(REQUIRED_FIELDS[self.record_type]) | set(OPTIONAL_FIELDS[self.record_type])
        unknown = sorted(set(self.field_map.values()) - known)
        if unknown:
            raise ConfigError(f"source '{self.source_id}' maps unknown canonical fields: {', '.join(unknown)}")
        missing = [name for name in REQUIRED_FIELDS[self.record_type] if name not in self.field_map.values()]
        if missing:
            raise ConfigError(f"source '{self.source_id}' does not map required fields: {', '.join(missing)}")
        if len(set(self.field_map.values())) != len(self.field_map):
            raise ConfigError(f"source '{self.source_id}' maps two columns onto one canonical field")

    @property
    def record_type(self):
        return self.kind.record_type

    @property
    def required_fields(self):
        return REQUIRED_FIELDS[self.record_type]

    def unit_for(self, canonical):
        return self.units.get(canonical, DEFAULT_UNITS.get(canonical, ""))

    def source_columns(self, canonical_names):
        """Source column names for a set of canonical fields"""
        reverse = {canonical: column for column, canonical in self.field_map.items()}
        return [reverse[name] for name in canonical_names if name in reverse]


def load_code_map(path):
    """
    Read a two-column code map (source term, canonical code).
    Terms are normalized so lookups ignore case and spacing.
    """
    if path is None:
        return {}
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as handle:
            sample = handle.read(2048)
            handle.seek(0)
            delimiter = "\t" if "\t" in sample else ","
            mapping = {}
            for row_number, row in enumerate(csv.reader(handle, delimiter=delimiter), start=1):
                if not row or row[0].startswith("#"):
                    continue
                if len(row) < 2:
                    raise ConfigError(f"code map {path} row {row_number}: expected two columns")
                term, code = normalize_text(row[0]), row[1].strip()
                if row_number == 1 and term in ("source_term", "term", "source"):
                    continue
                mapping[term] = code
    except OSError as e:
        raise StorageError(f"cannot read code map {path}: {e}") from e
    logger.info("loaded %d code map entries from %s", len(mapping), path)
    return mapping
