"""
Star schema of the warehouse: two fact tables (TESTRESULT, AMBIENT) and
eight dimension tables keyed by five-digit surrogate keys.
"""
from dataclasses import dataclass
from datetime import date

from ncdw.core.errors import QueryError
from ncdw.core.text import normalize_text

WEEKDAYS = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")


@dataclass(frozen=True)
class DimensionSchema:
    name: str
    natural_key: tuple
    attributes: tuple
    default_level: str
    int_columns: tuple = ()
    folded_columns: tuple = ()

    @property
    def columns(self):
        return ("key",) + self.attributes

    def normalize(self, column, value):
        """Canonical form of one natural-key value"""
        if column in self.int_columns:
            return int(value)
        if column in self.folded_columns:
            return normalize_text(value)
        return "" if value is None else str(value).strip()


DIMENSIONS = {
    "patient": DimensionSchema("patient", ("age_band", "gender"), ("age_band", "gender"), "age_band",
                               int_columns=("age_band",), folded_columns=("gender",)),
    "healthcare": DimensionSchema("healthcare", ("provider",), ("provider",), "provider",
                                  folded_columns=("provider",)),
    "lab": DimensionSchema("lab", ("lab_name",), ("lab_name",), "lab_name", folded_columns=("lab_name",)),
    "test_attribute": DimensionSchema("test_attribute", ("code",), ("code", "test_name"), "code"),
    "diagnosis": DimensionSchema("diagnosis", ("diagnosis_name",), ("diagnosis_name",), "diagnosis_name",
                                 folded_columns=("diagnosis_name",)),
    "geography": DimensionSchema("geography", ("city", "upazila", "district", "division"),
                                 ("city", "upazila", "district", "division"), "district",
                                 folded_columns=("city", "upazila", "district", "division")),
    "time": DimensionSchema("time", ("day",), ("day", "month", "year", "month_of_year", "weekday"), "day",
                            int_columns=("year", "month_of_year")),
    "source": DimensionSchema("source", ("source_id",), ("source_id", "source_kind"), "source_id"),
}


@dataclass(frozen=True)
class FactSchema:
    name: str
    columns: tuple
    references: dict
    measures: tuple
    int_columns: tuple
    bool_columns: tuple = ()
    text_columns: tuple = ()


FACTS = {
    "testresult": FactSchema(
        "testresult",
        columns=("pik", "time", "geo", "healthcare", "lab", "attribute", "patient", "diagnosis", "source",
                 "result_value", "result_positive"),
        references={"geo": "geography", "healthcare": "healthcare", "lab": "lab", "attribute": "test_attribute",
                    "patient": "patient", "diagnosis": "diagnosis", "source": "source"},
        measures=("result_value", "result_positive"),
        int_columns=("time", "geo", "healthcare", "lab", "attribute", "patient", "diagnosis", "source"),
        bool_columns=("result_positive",),
        text_columns=("pik",),
    ),
    "ambient": FactSchema(
        "ambient",
        columns=("time", "geo", "density", "avg_rainfall", "humidity", "air_pollutants", "temperature",
                 "pct_positive_dengue"),
        references={"geo": "geography"},
        measures=("density", "avg_rainfall", "humidity", "air_pollutants", "temperature", "pct_positive_dengue"),
        int_columns=("time", "geo"),
    ),
}

_FACT_ALIASES = {"testresult": "testresult", "test_result": "testresult", "ambient": "ambient"}


def fact_schema(name):
    """Resolve a fact table name (case-insensitive, test_result accepted)"""
    canonical = _FACT_ALIASES.get(str(name).strip().lower())
    if canonical is None:
        raise QueryError(f"unknown fact table {name!r}; expected one of {', '.join(FACTS)}")
    return FACTS[canonical]


def dimension_schema(name):
    schema = DIMENSIONS.get(str(name).strip().lower())
    if schema is None:
        raise QueryError(f"unknown dimension {name!r}; expected one of {', '.join(DIMENSIONS)}")
    return schema


def time_attributes(day):
    """TIME dimension attributes of a calendar day"""
    if isinstance(day, str):
        day = date.fromisoformat(day)
    return {
        "day": day.isoformat(),
        "month": f"{day.year:04d}-{day.month:02d}",
        "year": day.year,
        "month_of_year": day.month,
        "weekday": WEEKDAYS[day.weekday()],
    }
