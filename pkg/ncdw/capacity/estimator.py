"""
National load and storage estimation.

Daily records R are the sum of per-category hospital loads
(s / sum(s) * n * r_bar, one term per seat category) plus the load of the
diagnostic centres (count * weight * r_bar). Storage is R * days * record size.
"""
import csv
import io
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from ncdw.core.errors import RangeError, StorageError, ValidationError

logger = logging.getLogger(__name__)

KB_PER_GB = 10 ** 6
GB_PER_TB = 1024
ROUNDING_MODES = ("ceiling", "half_up")

# Average daily entries per hospital, Sunday first
REFERENCE_WEEKDAY_AVGS = (10072, 9976, 10132, 9931, 8973, 5294, 11799)
REFERENCE_R_BAR = 9456
# (seats, hospitals) per bed-capacity category of government hospitals
REFERENCE_CATEGORIES = (
    (10, 17), (20, 32), (31, 266), (50, 158), (100, 31), (150, 1),
    (200, 1), (250, 26), (500, 2), (500, 11), (1500, 7),
)
REFERENCE_DIAGNOSTIC_CENTERS = 8000
DEFAULT_HORIZONS = (1, 365, 1825)


def _exact(value):
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    return Fraction(str(value))


def _round(value, mode):
    if mode == "ceiling":
        return math.ceil(value)
    if mode == "half_up":
        return math.floor(value + Fraction(1, 2))
    raise ValidationError(f"unknown rounding mode {mode!r}; expected {' or '.join(ROUNDING_MODES)}")


@dataclass(frozen=True)
class HospitalCategory:
    seats: int
    hospitals: int

    def __post_init__(self):
        if self.seats < 0 or self.hospitals < 0:
            raise RangeError(f"seat and hospital counts must be >= 0, got {self.seats}, {self.hospitals}")


@dataclass(frozen=True)
class CapacityInputs:
    """Inputs of the load and storage estimate"""
    weekday_avgs: tuple
    categories: tuple
    diagnostic_centers: int = 0
    diagnostic_weight: float = 0.25
    record_size_kb: float = 1.0
    horizon_days: tuple = DEFAULT_HORIZONS
    r_bar: float | None = None
    rounding: str = "ceiling"

    def __post_init__(self):
        if len(self.weekday_avgs) != 7:
            raise ValidationError(f"need 7 weekday averages, got {len(self.weekday_avgs)}")
        if any(value < 0 for value in self.weekday_avgs):
            raise RangeError("weekday averages must be >= 0")
        categories = tuple(
            category if isinstance(category, HospitalCategory) else HospitalCategory(*category)
            for category in self.categories
        )
        object.__setattr__(self, "categories", categories)
        if self.diagnostic_centers < 0:
            raise RangeError("diagnostic centre count must be >= 0")
        if not 0 < self.diagnostic_weight <= 1:
            raise RangeError(f"diagnostic weight must be in (0, 1], got {self.diagnostic_weight}")
        if self.record_size_kb <= 0:
            raise RangeError(f"record size must be > 0 KB, got {self.record_size_kb}")
        if any(days < 0 for days in self.horizon_days):
            raise RangeError("horizons must be >= 0 days")
        if self.r_bar is not None and self.r_bar < 0:
            raise RangeError("r_bar must be >= 0")
        _round(Fraction(0), self.rounding)

    @property
    def seat_sum(self):
        return sum(category.seats for category in self.categories)


def reference_inputs(**overrides):
    """Inputs describing the national deployment the estimator was built for"""
    values = dict(
        weekday_avgs=REFERENCE_WEEKDAY_AVGS,
        categories=REFERENCE_CATEGORIES,
        diagnostic_centers=REFERENCE_DIAGNOSTIC_CENTERS,
        r_bar=REFERENCE_R_BAR,
    )
    values.update(overrides)
    return CapacityInputs(**values)


def average_daily_records(weekday_avgs):
    """Arithmetic mean of the seven weekday averages"""
    values = list(weekday_avgs)
    if len(values) != 7:
        raise ValidationError(f"need 7 weekday averages, got {len(values)}")
    return float(sum(_exact(value) for value in values) / 7)


def category_load_exact(seats, hospitals, r_bar, seat_sum):
    """Unrounded s * n * r_bar / sum(s)"""
    if seat_sum == 0:
        raise RangeError("seat sum is zero; category weights are undefined")
    return Fraction(seats) * Fraction(hospitals) * _exact(r_bar) / Fraction(seat_sum)


def category_load(seats, hospitals, r_bar, seat_sum, rounding="ceiling"):
    """
    Expected daily records of one hospital category.

    Args:
        seats: seat (bed) count s of the category
        hospitals: number of hospitals n in it
        r_bar: average daily records per hospital
        seat_sum: sum of s over all categories
        rounding: `ceiling` (whole records, rounded up) or `half_up`

    Returns:
        int
    """
    return _round(category_load_exact(seats, hospitals, r_bar, seat_sum), rounding)


@dataclass(frozen=True)
class CategoryLoad:
    seats: int
    hospitals: int
    weight: float
    load: int


@dataclass(frozen=True)
class StorageEstimate:
    days: int
    size_kb: float
    gb: float
    tb: float
    tb_decimal: float
    tib: float


def storage_size(daily_records, days, record_size_kb=1.0):
    """
    Storage needed for `days` of records.

    GB are decimal (10^6 KB); `tb` divides those GB by 1024, which is the
    convention the published national figures use. Pure decimal TB and
    binary TiB are given as well.
    """
    if daily_records < 0 or days < 0 or record_size_kb <= 0:
        raise RangeError("storage estimate needs R >= 0, d >= 0 and a record size > 0")
    size_kb = _exact(daily_records) * _exact(days) * _exact(record_size_kb)
    gb = size_kb / KB_PER_GB
    return StorageEstimate(
        days=int(days),
        size_kb=float(size_kb),
        gb=float(gb),
        tb=float(gb / GB_PER_TB),
        tb_decimal=float(size_kb / 10 ** 9),
        tib=float(size_kb / 1024 ** 3),
    )


@dataclass
class CapacityReport:
    r_bar: float
    r_bar_computed: float
    seat_sum: int
    per_category: list
    govt_total: int
    diagnostic_total: int
    daily_total: int
    record_size_kb: float
    sizes: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def rows(self):
        """Long-form table: section, item, seats, hospitals, weight, value, unit"""
        rows = [
            ("r_bar", "weekday mean", "", "", "", round(self.r_bar_computed, 2), "records/day"),
            ("r_bar", "used", "", "", "", self.r_bar, "records/day"),
            ("seat_sum", "sum of category seats", "", "", "", self.seat_sum, "seats"),
        ]
        for item in self.per_category:
            rows.append(("category", f"s={item.seats}", item.seats, item.hospitals, f"{item.weight:.4f}",
                         item.load, "records/day"))
        rows += [
            ("total", "government hospitals", "", sum(item.hospitals for item in self.per_category), "",
             self.govt_total, "records/day"),
            ("total", "diagnostic centres", "", "", "", self.diagnostic_total, "records/day"),
            ("total", "overall daily", "", "", "", self.daily_total, "records/day"),
        ]
        for size in self.sizes:
            label = f"{size.days} day" if size.days == 1 else f"{size.days} days"
            if size.days == 1:
                rows.append(("storage", label, "", "", "", round(size.gb, 2), "GB"))
            else:
                rows.append(("storage", label, "", "", "", round(size.tb, 2), "TB"))
            rows.append(("storage_decimal", label, "", "", "", round(size.tb_decimal, 4), "TB (10^9 KB)"))
            rows.append(("storage_binary", label, "", "", "", round(size.tib, 4), "TiB (2^30 KB)"))
        for note in self.notes:
            rows.append(("note", note, "", "", "", "", ""))
        return rows

    def to_csv(self):
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(("section", "item", "seats", "hospitals", "weight", "value", "unit"))
        writer.writerows(self.rows())
        return buffer.getvalue()

    def write_csv(self, path):
        try:
            Path(path).write_text(self.to_csv(), encoding="utf-8")
        except OSError as e:
            raise StorageError(f"cannot write capacity report {path}: {e}") from e
        return Path(path)


def national_load(inputs):
    """
    Daily national record load and storage sizes for the given inputs.

    Returns:
        CapacityReport
    """
    computed = average_daily_records(inputs.weekday_avgs)
    r_bar = computed if inputs.r_bar is None else inputs.r_bar
    seat_sum = inputs.seat_sum
    if seat_sum == 0 and inputs.categories:
        raise RangeError("hospital categories have no seats; category weights are undefined")

    per_category = []
    for category in inputs.categories:
        load = category_load(category.seats, category.hospitals, r_bar, seat_sum, inputs.rounding)
        per_category.append(CategoryLoad(category.seats, category.hospitals, category.seats / seat_sum, load))
    govt_total = sum(item.load for item in per_category)
    diagnostic_total = _round(Fraction(inputs.diagnostic_centers) * _exact(inputs.diagnostic_weight)
                              * _exact(r_bar), "half_up")
    daily_total = govt_total + diagnostic_total

    notes = [f"record size {inputs.record_size_kb} KB per record; a 0.1 KB record gives one tenth of every size"]
    if inputs.r_bar is not None and abs(inputs.r_bar - computed) > 1e-9:
        notes.append(f"r_bar {inputs.r_bar} given explicitly; the weekday mean is {computed:.2f}")

    report = CapacityReport(
        r_bar=r_bar,
        r_bar_computed=computed,
        seat_sum=seat_sum,
        per_category=per_category,
        govt_total=govt_total,
        diagnostic_total=diagnostic_total,
        daily_total=daily_total,
        record_size_kb=inputs.record_size_kb,
        sizes=[storage_size(daily_total, days, inputs.record_size_kb) for days in inputs.horizon_days],
        notes=notes,
    )
    logger.info("national load: %d records/day (%d hospitals, %d diagnostic)",
                daily_total, govt_total, diagnostic_total)
    return report
