"""
Synthetic data: flat fact tables for the cube benchmark and a dengue
cohort with planted seasonal, demographic and environmental structure.

Counts in the cohort are allocated exactly (largest remainder), so monthly
tests and positives, the age mix and the gender mix are known in advance
and can serve as test oracles. Randomness only decides which record gets
which value.
"""
import hashlib
import json
import logging
import math
from calendar import monthrange
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from pathlib import Path

import numpy as np
import pandas as pd

from ncdw.core.errors import PlanError, StorageError
from ncdw.warehouse.loader import DENGUE_CODES

logger = logging.getLogger(__name__)

# (name, cardinality) of the benchmark dimensions, in cube order
DEFAULT_DIMENSIONS = (("district", 64), ("month", 24), ("age_band", 9), ("gender", 3), ("test_code", 12))
DEFAULT_MEMORY_BUDGET_MB = 2048
# bytes per row and dimension held across preparation and aggregation
_BYTES_PER_CELL = 8 * 4

GENDER_RATIO = {"male": 39801, "female": 30246, "other": 2}
# share of cases per decade band 0-9 ... 80-89
AGE_MIX = (0.12, 0.21, 0.25, 0.194, 0.10, 0.07, 0.04, 0.012, 0.004)
# average daily entries, Sunday first
WEEKDAY_WEIGHTS = (10072, 9976, 10132, 9931, 8973, 5294, 11799)
# relative monthly test volume; the second year carries the outbreak
SEASON_WEIGHTS = (
    (1, 1, 1, 1, 1, 1.3, 1.6, 2, 1.7, 1.4, 1.1, 1),
    (1, 1, 1, 1, 1, 4, 8, 12, 9, 6, 2, 1),
)
START_MONTH = (2021, 1)
DEFAULT_TOTAL_TESTS = 12000

# city, upazila, district, division; one weather station per district
DISTRICTS = (
    ("Dhaka North", "Gulshan", "Dhaka", "Dhaka"),
    ("Dhaka South", "Kotwali", "Narayanganj", "Dhaka"),
    ("Chattogram", "Panchlaish", "Chattogram", "Chattogram"),
    ("Cox's Bazar", "Ukhia", "Cox's Bazar", "Chattogram"),
    ("Khulna", "Sonadanga", "Khulna", "Khulna"),
    ("Rajshahi", "Boalia", "Rajshahi", "Rajshahi"),
    ("Barishal", "Kotwali", "Barishal", "Barishal"),
    ("Sylhet", "Kotwali", "Sylhet", "Sylhet"),
)
DISTRICT_WEIGHTS = (0.34, 0.14, 0.16, 0.06, 0.09, 0.08, 0.06, 0.07)

FIRST_NAMES = (
    "Mohammad", "Abdul", "Rahim", "Karim", "Sabuj", "Tanvir", "Rafiq", "Jamal", "Sohel", "Arif",
    "Nasrin", "Fatema", "Ayesha", "Sharmin", "Rokeya", "Taslima", "Sumaiya", "Nusrat", "Farhana", "Jannat",
    "Habib", "Kamrul", "Mizanur", "Shahid", "Anwar", "Rubina", "Shirin", "Laboni", "Mitu", "Shapla",
)
LAST_NAMES = (
    "Rahman", "Hossain", "Islam", "Ahmed", "Chowdhury", "Akter", "Khatun", "Begum", "Uddin", "Alam",
    "Sarker", "Mia", "Haque", "Karim", "Das", "Roy", "Saha", "Biswas", "Talukder", "Sikder",
)
# spellings the phonetic code treats as equal
SPELLING_VARIANTS = {
    "Mohammad": "Muhammad", "Rahman": "Rahaman", "Hossain": "Hossen", "Chowdhury": "Chowdhuri",
    "Akter": "Akhter", "Sabuj": "Sobuj", "Fatema": "Fatima",
}

OTHER_TESTS = ("CBC", "MALARIA_RDT")
DENGUE_CODE_MIX = (0.6, 0.25, 0.15)

# local test names per canonical code, as the hospitals write them
CODE_MAP = (
    ("NS1 Antigen", "DENGUE_NS1"),
    ("Dengue NS1", "DENGUE_NS1"),
    ("Dengue IgM", "DENGUE_IGM"),
    ("Dengue IgG", "DENGUE_IGG"),
    ("Complete Blood Count", "CBC"),
    ("CBC", "CBC"),
    ("Malaria RDT", "MALARIA_RDT"),
)
_LOCAL_NAMES = {
    "DENGUE_NS1": ("NS1 Antigen", "Dengue NS1"),
    "DENGUE_IGM": ("Dengue IgM",),
    "DENGUE_IGG": ("Dengue IgG",),
    "CBC": ("Complete Blood Count", "CBC"),
    "MALARIA_RDT": ("Malaria RDT",),
}

HOSPITAL_FIELDS = {
    "patient_name": "patient_name", "age": "age", "sex": "gender", "collected_at": "test_time",
    "test": "test_name", "result": "result", "city": "city", "upazila": "upazila",
    "district": "district", "division": "division", "lab": "lab", "ward": "diagnosis",
}
DIAGNOSTIC_FIELDS = {
    "Name": "patient_name", "Age (yrs)": "age", "Gender": "gender", "Sample Time": "test_time",
    "Investigation": "test_name", "Outcome": "result", "City": "city", "Upazila": "upazila",
    "District": "district", "Division": "division",
}
WEATHER_FIELDS = {
    "date": "obs_date", "station_city": "city", "station_upazila": "upazila", "district": "district",
    "division": "division", "rain": "rainfall", "rh": "humidity", "temp": "temperature",
}
SOURCES = (
    ("dmch", "hospital", "dmch_tests.csv", HOSPITAL_FIELDS),
    ("popular_dc", "diagnostic_center", "popular_dc_tests.csv", DIAGNOSTIC_FIELDS),
    ("bmd", "meteorology", "bmd_daily.csv", WEATHER_FIELDS),
)
CODE_MAP_FILE = "code_map.csv"
CONFIG_FILE = "ncdw.toml"


def allocate(total, weights):
    """
    Split an integer total in proportion to weights (largest remainder,
    ties to the earlier position).

    Returns:
        list of int summing to total
    """
    weights = [float(weight) for weight in weights]
    weight_sum = sum(weights)
    if total < 0 or weight_sum <= 0 or any(weight < 0 for weight in weights):
        raise PlanError("allocation needs a non-negative total and positive weights")
    shares = [total * weight / weight_sum for weight in weights]
    counts = [math.floor(share) for share in shares]
    order = sorted(range(len(weights)), key=lambda i: (-(shares[i] - counts[i]), i))
    for i in order[:total - sum(counts)]:
        counts[i] += 1
    return counts


def _round_half_up(value):
    return int(math.floor(value + 0.5))


def _month_after(start, offset):
    index = start[0] * 12 + start[1] - 1 + offset
    return index // 12, index % 12 + 1


def generate_synthetic(rows, d, cardinalities=None, seed=0, memory_budget_mb=DEFAULT_MEMORY_BUDGET_MB):
    """
    Flat fact table for the cube benchmark.

    Args:
        rows: number of fact rows
        d: number of dimension columns (1 to 5)
        cardinalities: distinct values per dimension (default per dimension)
        seed: random seed; the same seed gives the same table
        memory_budget_mb: refuse plans whose working set would exceed this

    Returns:
        DataFrame with the d dimension columns, a numeric `value` and a
        boolean `positive`
    """
    if not 1 <= d <= len(DEFAULT_DIMENSIONS):
        raise PlanError(f"cube size must be between 1 and {len(DEFAULT_DIMENSIONS)}, got {d}")
    if rows < 1:
        raise PlanError(f"row count must be positive, got {rows}")
    names = [name for name, _ in DEFAULT_DIMENSIONS[:d]]
    if cardinalities is None:
        cardinalities = [card for _, card in DEFAULT_DIMENSIONS[:d]]
    cardinalities = list(cardinalities)
    if len(cardinalities) != d:
        raise PlanError(f"need {d} cardinalities, got {len(cardinalities)}")
    if any(card < 1 for card in cardinalities):
        raise PlanError("cardinalities must be positive")
    needed_mb = rows * (d + 2) * _BYTES_PER_CELL / 2 ** 20
    if needed_mb > memory_budget_mb:
        raise PlanError(f"{rows} rows x {d} dimensions need about {needed_mb:.0f} MB, "
                        f"budget is {memory_budget_mb} MB")

    rng = np.random.default_rng(seed)
    columns = {}
    for name, card in zip(names, cardinalities):
        if name == "gender" and card == len(GENDER_RATIO):
            weights = np.array(list(GENDER_RATIO.values()), dtype="float64")
            columns[name] = rng.choice(np.array(list(GENDER_RATIO)), size=rows, p=weights / weights.sum())
        elif name == "age_band" and card == len(AGE_MIX):
            columns[name] = rng.choice(card, size=rows, p=np.array(AGE_MIX) / sum(AGE_MIX))
        elif name == "month" and card == 24:
            weights = np.array(SEASON_WEIGHTS[0] + SEASON_WEIGHTS[1], dtype="float64")
            columns[name] = rng.choice(card, size=rows, p=weights / weights.sum())
        else:
            columns[name] = rng.integers(0, card, size=rows)
    columns["value"] = np.round(rng.gamma(2.0, 50.0, size=rows), 3)
    columns["positive"] = rng.random(rows) < 0.25
    logger.debug("generated synthetic table: %d rows, dims %s", rows, ", ".join(names))
    return pd.DataFrame(columns)


@dataclass
class DengueCohort:
    """Generated source rows plus the counts that were planted in them"""
    seed: int
    months: tuple
    tests: np.ndarray
    positives: np.ndarray
    other_tests: np.ndarray
    gender_counts: dict
    age_counts: dict
    test_rows: pd.DataFrame
    weather_rows: pd.DataFrame
    rainfall: np.ndarray
    humidity: np.ndarray
    temperature: np.ndarray
    repeat_visits: int = 0
    dirty_rows: list = field(default_factory=list)

    @property
    def total_tests(self):
        return int(self.tests.sum())

    @property
    def total_positives(self):
        return int(self.positives.sum())

    @property
    def peak_month(self):
        return self.months[int(np.argmax(self.positives))]

    def month_tests(self, month, dengue_only=True):
        """Planted number of tests in (year, month)"""
        i = self.months.index(tuple(month))
        return int(self.tests[i]) + (0 if dengue_only else int(self.other_tests[i]))

    def demo_secret(self):
        """Link key for demo runs, derived from the seed"""
        return hashlib.sha256(f"ncdw-demo-link-key-{self.seed}".encode("ascii")).digest()


def _month_days(year, month):
    return [date(year, month, day) for day in range(1, monthrange(year, month)[1] + 1)]


def _spread_over_days(count, year, month):
    """Exact allocation of a month's records over its days by weekday weight"""
    days = _month_days(year, month)
    weights = [WEEKDAY_WEIGHTS[(day.weekday() + 1) % 7] for day in days]
    per_day = allocate(count, weights)
    return [day for day, n in zip(days, per_day) for _ in range(n)]


def _band_ages(rng, counts):
    ages = []
    for band, n in enumerate(counts):
        ages.extend(int(age) for age in rng.integers(band * 10, band * 10 + 10, size=n))
    ages = np.array(ages, dtype="int64")
    rng.shuffle(ages)
    return ages


def _orthogonal_noise(rng, reference, scale):
    """Zero-mean noise with zero sample correlation to `reference`"""
    noise = rng.normal(0.0, 1.0, size=len(reference))
    centred = reference - reference.mean()
    noise = noise - noise.mean()
    if centred @ centred > 0:
        noise = noise - (noise @ centred) / (centred @ centred) * centred
    std = noise.std()
    return noise / std * scale if std > 0 else noise


def generate_dengue_cohort(seed=0, total_tests=DEFAULT_TOTAL_TESTS, other_share=0.15, repeat_rate=0.06,
                           dirty_rows=0):
    """
    Two years of dengue tests from two laboratories plus daily weather.

    Args:
        seed: random seed; the same seed gives identical rows
        total_tests: dengue tests over the 24 months
        other_share: extra non-dengue tests, as a share of dengue tests
        repeat_rate: chance that a test belongs to an earlier patient
        dirty_rows: malformed rows appended to the hospital file

    Returns:
        DengueCohort
    """
    if total_tests < 100:
        raise PlanError(f"a cohort needs at least 100 tests, got {total_tests}")
    if not 0 <= repeat_rate < 1 or other_share < 0 or dirty_rows < 0:
        raise PlanError("repeat rate must be in [0, 1); other share and dirty rows must be >= 0")
    rng = np.random.default_rng(seed)
    weights = list(SEASON_WEIGHTS[0]) + list(SEASON_WEIGHTS[1])
    months = tuple(_month_after(START_MONTH, i) for i in range(len(weights)))

    tests = np.array(allocate(total_tests, weights), dtype="int64")
    positivity = np.array([0.12 + 0.035 * weight for weight in weights])
    positives = np.array([_round_half_up(n * p) for n, p in zip(tests, positivity)], dtype="int64")
    others = np.array(allocate(_round_half_up(total_tests * other_share), [1] * len(months)), dtype="int64")

    # dengue tests: month, day and positivity are exact; the rest is drawn
    days, flags = [], []
    for (year, month), n, p in zip(months, tests, positives):
        days.extend(_spread_over_days(int(n), year, month))
        month_flags = np.zeros(n, dtype=bool)
        month_flags[rng.permutation(n)[:p]] = True
        flags.extend(month_flags.tolist())
    flags = np.array(flags, dtype=bool)
    n_total = len(days)

    gender_counts = dict(zip(GENDER_RATIO, allocate(n_total, list(GENDER_RATIO.values()))))
    genders = np.array([name for name, n in gender_counts.items() for _ in range(n)])
    rng.shuffle(genders)
    age_counts = dict(enumerate(allocate(int(flags.sum()), AGE_MIX)))
    ages = np.zeros(n_total, dtype="int64")
    ages[flags] = _band_ages(rng, list(age_counts.values()))
    ages[~flags] = _band_ages(rng, allocate(int((~flags).sum()), AGE_MIX))
    codes = rng.choice(np.array(DENGUE_CODES), size=n_total, p=DENGUE_CODE_MIX)

    # non-dengue tests share the calendar but not the planted structure
    other_days = []
    for (year, month), n in zip(months, others):
        other_days.extend(_spread_over_days(int(n), year, month))
    n_other = len(other_days)
    other_codes = rng.choice(np.array(OTHER_TESTS), size=n_other)
    other_flags = (other_codes == "MALARIA_RDT") & (rng.random(n_other) < 0.05)
    other_ages = rng.integers(1, 80, size=n_other)
    other_genders = rng.choice(np.array(["male", "female"]), size=n_other)

    records = [
        {"day": day, "code": str(code), "positive": bool(flag), "age": int(age), "gender": str(gender)}
        for day, code, flag, age, gender in zip(days, codes, flags, ages, genders)
    ] + [
        {"day": day, "code": str(code), "positive": bool(flag), "age": int(age), "gender": str(gender)}
        for day, code, flag, age, gender in zip(other_days, other_codes, other_flags, other_ages, other_genders)
    ]
    records.sort(key=lambda record: record["day"])

    # identities: a repeat visit reuses an earlier patient of the same gender and age
    patients, repeats, per_day = {}, 0, {}
    district_choice = rng.choice(len(DISTRICTS), size=len(records), p=DISTRICT_WEIGHTS)
    source_choice = rng.random(len(records)) < 0.7
    repeat_draw = rng.random(len(records))
    first_draw = rng.integers(0, len(FIRST_NAMES), size=len(records))
    last_draw = rng.integers(0, len(LAST_NAMES), size=len(records))
    variant_draw = rng.random(len(records))
    for i, record in enumerate(records):
        identity_key = (record["gender"], record["age"])
        earlier = patients.get(identity_key)
        if earlier and repeat_draw[i] < repeat_rate:
            name, district = earlier[int(first_draw[i]) % len(earlier)]
            first, last = name.split(" ", 1)
            if variant_draw[i] < 0.5:
                first, last = SPELLING_VARIANTS.get(first, first), SPELLING_VARIANTS.get(last, last)
            record["name"] = f"{first} {last}"
            record["district"] = district
            repeats += 1
        else:
            record["name"] = f"{FIRST_NAMES[first_draw[i]]} {LAST_NAMES[last_draw[i]]}"
            record["district"] = int(district_choice[i])
            patients.setdefault(identity_key, []).append((record["name"], record["district"]))
        k = per_day.get(record["day"], 0)
        per_day[record["day"]] = k + 1
        # unique second of the day per record
        record["time"] = datetime.combine(record["day"], datetime.min.time()) + timedelta(
            seconds=8 * 3600 + (k * 37) % 36000)
        record["source"] = "dmch" if source_choice[i] else "popular_dc"
        names = _LOCAL_NAMES[record["code"]]
        record["test"] = names[i % len(names)]

    test_rows = pd.DataFrame(records)

    # monthly weather: rain and humidity follow positives, temperature does not
    scaled = positives / max(1, positives.max())
    rainfall = np.clip(60.0 + 320.0 * scaled + rng.normal(0.0, 12.0, size=len(months)), 0.0, None)
    humidity = np.clip(62.0 + 22.0 * scaled + rng.normal(0.0, 3.0, size=len(months)), 0.0, 100.0)
    temperature = 27.5 + _orthogonal_noise(rng, positives.astype("float64"), 2.2)
    weather = []
    for i, (year, month) in enumerate(months):
        for day in _month_days(year, month):
            rain_noise = rng.normal(0.0, 0.08, size=len(DISTRICTS))
            for district in range(len(DISTRICTS)):
                weather.append({
                    "day": day,
                    "district": district,
                    "rainfall": max(0.0, rainfall[i] * (1.0 + rain_noise[district])),
                    "humidity": float(humidity[i]),
                    "temperature": float(temperature[i]),
                })
    weather_rows = pd.DataFrame(weather)

    dirty = [{"age": "unknown", "test": "NS1 Antigen"}, {"age": "34", "test": "Chikungunya PCR"}]
    cohort = DengueCohort(
        seed=seed,
        months=months,
        tests=tests,
        positives=positives,
        other_tests=others,
        gender_counts=gender_counts,
        age_counts=age_counts,
        test_rows=test_rows,
        weather_rows=weather_rows,
        rainfall=rainfall,
        humidity=humidity,
        temperature=temperature,
        repeat_visits=repeats,
        dirty_rows=[dirty[i % len(dirty)] for i in range(dirty_rows)],
    )
    logger.info("generated cohort: %d dengue tests (%d positive), %d other tests, %d repeat visits",
                cohort.total_tests, cohort.total_positives, n_other, repeats)
    return cohort


def _result_text(positive, style):
    if style == "hospital":
        return "Positive" if positive else "Negative"
    return "+ve" if positive else "-ve"


def _hospital_frame(rows, dirty):
    place = [DISTRICTS[district] for district in rows["district"]]
    frame = pd.DataFrame({
        "patient_name": rows["name"].to_numpy(),
        "age": rows["age"].astype(str).to_numpy(),
        "sex": rows["gender"].str[0].str.upper().to_numpy(),
        "collected_at": [moment.strftime("%Y-%m-%d %H:%M:%S") for moment in rows["time"]],
        "test": rows["test"].to_numpy(),
        "result": [_result_text(flag, "hospital") for flag in rows["positive"]],
        "city": [p[0] for p in place],
        "upazila": [p[1] for p in place],
        "district": [p[2] for p in place],
        "division": [p[3] for p in place],
        "lab": "DMCH Central Lab",
        "ward": ["Fever clinic" if code in DENGUE_CODES else "General" for code in rows["code"]],
    })
    extra = [{
        "patient_name": "Unnamed Patient", "age": row["age"], "sex": "M", "collected_at": "2022-08-01 09:00:00",
        "test": row["test"], "result": "Negative", "city": DISTRICTS[0][0], "upazila": DISTRICTS[0][1],
        "district": DISTRICTS[0][2], "division": DISTRICTS[0][3], "lab": "DMCH Central Lab", "ward": "General",
    } for row in dirty]
    return pd.concat([frame, pd.DataFrame(extra, columns=frame.columns)], ignore_index=True) if extra else frame


def _diagnostic_frame(rows):
    place = [DISTRICTS[district] for district in rows["district"]]
    return pd.DataFrame({
        "Name": rows["name"].str.upper().to_numpy(),
        "Age (yrs)": rows["age"].astype(str).to_numpy(),
        "Gender": rows["gender"].str.capitalize().to_numpy(),
        "Sample Time": [moment.strftime("%d/%m/%Y %H:%M:%S") for moment in rows["time"]],
        "Investigation": rows["test"].to_numpy(),
        "Outcome": [_result_text(flag, "diagnostic") for flag in rows["positive"]],
        "City": [p[0] for p in place],
        "Upazila": [p[1] for p in place],
        "District": [p[2] for p in place],
        "Division": [p[3] for p in place],
    })


def _weather_frame(rows):
    place = [DISTRICTS[district] for district in rows["district"]]
    # odd stations report Fahrenheit
    temperature = [
        f"{value * 9.0 / 5.0 + 32.0:.4f} F" if district % 2 else f"{value:.4f}"
        for value, district in zip(rows["temperature"], rows["district"])
    ]
    return pd.DataFrame({
        "date": [day.isoformat() for day in rows["day"]],
        "station_city": [p[0] for p in place],
        "station_upazila": [p[1] for p in place],
        "district": [p[2] for p in place],
        "division": [p[3] for p in place],
        "rain": [f"{value:.2f} mm" for value in rows["rainfall"]],
        "rh": [f"{value:.2f}" for value in rows["humidity"]],
        "temp": temperature,
    })


def _toml_value(value):
    if isinstance(value, dict):
        return "{ " + ", ".join(f"{json.dumps(key)} = {_toml_value(item)}" for key, item in value.items()) + " }"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(item) for item in value) + "]"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return str(value)
    return json.dumps(str(value))


def config_document(warehouse_root="warehouse"):
    """TOML configuration describing the generated sources"""
    lines = [
        f"warehouse_root = {_toml_value(warehouse_root)}",
        "reporting_zone_offset_minutes = 360",
        f"dengue_codes = {_toml_value(list(DENGUE_CODES))}",
        "",
    ]
    for source_id, kind, _, field_map in SOURCES:
        lines += [
            "[[sources]]",
            f"id = {_toml_value(source_id)}",
            f"kind = {_toml_value(kind)}",
            "zone_offset_minutes = 360",
            f"field_map = {_toml_value(field_map)}",
        ]
        if kind != "meteorology":
            lines.append(f"code_map = {_toml_value(CODE_MAP_FILE)}")
        lines.append("")
    return "\n".join(lines)


def source_frames(cohort):
    """Source file contents as DataFrames, keyed by source id"""
    rows = cohort.test_rows
    return {
        "dmch": _hospital_frame(rows.loc[rows["source"] == "dmch"], cohort.dirty_rows),
        "popular_dc": _diagnostic_frame(rows.loc[rows["source"] == "popular_dc"]),
        "bmd": _weather_frame(cohort.weather_rows),
    }


def write_source_files(cohort, out_dir, warehouse_root="warehouse"):
    """
    Write the cohort as source CSV files, a code map and a configuration
    document ready for `ncdw ingest`.

    Returns:
        dict: source id -> file path, plus `code_map` and `config`
    """
    out_dir = Path(out_dir)
    paths = {}
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for source_id, frame in source_frames(cohort).items():
            file_name = next(name for sid, _, name, _ in SOURCES if sid == source_id)
            paths[source_id] = out_dir / file_name
            frame.to_csv(paths[source_id], index=False, lineterminator="\n")
        paths["code_map"] = out_dir / CODE_MAP_FILE
        pd.DataFrame(CODE_MAP, columns=["source_term", "code"]).to_csv(paths["code_map"], index=False,
                                                                        lineterminator="\n")
        paths["config"] = out_dir / CONFIG_FILE
        paths["config"].write_text(config_document(warehouse_root), encoding="utf-8")
    except OSError as e:
        raise StorageError(f"cannot write generated sources to {out_dir}: {e}") from e
    logger.info("wrote %d source files to %s", len(SOURCES), out_dir)
    return paths
