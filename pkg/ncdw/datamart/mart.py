import logging
import re
import shutil
from dataclasses import dataclass
from pathlib import Path

from ncdw.core.errors import StorageError, ValidationError
from ncdw.warehouse.loader import DENGUE_CODES
from ncdw.warehouse.schema import DIMENSIONS
from ncdw.warehouse.store import WarehouseStore

logger = logging.getLogger(__name__)

MARTS_DIR = "marts"
_NAME = re.compile(r"^[a-z][a-z0-9_-]{0,63}$")


@dataclass(frozen=True)
class MartSpec:
    """
    A subject-oriented slice of the warehouse: the test facts of one
    disease (given by its canonical test codes) plus matching ambient rows.
    """
    name: str
    disease_codes: frozenset

    def __post_init__(self):
        name = str(self.name).strip().lower()
        if not _NAME.match(name):
            raise ValidationError(f"mart name {self.name!r} must be a short lowercase identifier")
        codes = frozenset(str(code).strip() for code in self.disease_codes if str(code).strip())
        if not codes:
            raise ValidationError(f"mart '{name}' needs at least one disease code")
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "disease_codes", codes)

    @classmethod
    def dengue(cls):
        return cls("dengue", frozenset(DENGUE_CODES))


def load_codes(path):
    """Disease codes from a file: one per line or comma separated, '#' comments"""
    try:
        text = Path(path).read_text(encoding="utf-8-sig")
    except OSError as e:
        raise StorageError(f"cannot read code list {path}: {e}") from e
    codes = []
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        codes.extend(part.strip() for part in line.split(",") if part.strip())
    return frozenset(codes)


def mart_root(warehouse_root, name):
    return Path(warehouse_root) / MARTS_DIR / name


def derive_mart(spec, store):
    """
    Build the mart as a separate store under <warehouse>/marts/<name>.

    The mart holds exactly the test facts whose code is one of the disease
    codes, the ambient facts of the (geography, day) pairs those tests were
    taken on, and the warehouse dimensions with their keys unchanged.
    Deriving again replaces the previous mart with identical content.

    Returns:
        WarehouseStore: the mart
    """
    wide = store.wide_frame("testresult")
    selected = wide["code"].isin(spec.disease_codes).to_numpy()
    tests = store.fact("testresult").loc[selected]
    if len(tests) == 0:
        logger.warning("mart '%s': no test facts carry codes %s; the mart will be empty",
                       spec.name, ", ".join(sorted(spec.disease_codes)))

    pairs = set(zip(wide.loc[selected, "geo"], wide.loc[selected, "day"]))
    ambient = store.fact("ambient")
    ambient_days = store.day_labels(ambient["time"]).to_numpy()
    keep = [(geo, day) in pairs for geo, day in zip(ambient["geo"], ambient_days)]
    ambient = ambient.loc[keep]

    target = mart_root(store.root, spec.name)
    staging = target.with_name(f".{spec.name}.building")
    try:
        shutil.rmtree(staging, ignore_errors=True)
        mart = WarehouseStore(staging, store.reporting_offset_minutes)
        with mart.writing():
            for name in DIMENSIONS:
                mart.adopt_dimension(name, store.dimension(name))
            mart.append_facts("testresult", tests)
            mart.replace_facts("ambient", ambient)
            mart.commit()
        if target.exists():
            shutil.rmtree(target)
        staging.rename(target)
    except OSError as e:
        shutil.rmtree(staging, ignore_errors=True)
        raise StorageError(f"cannot write mart {target}: {e}") from e

    logger.info("mart '%s': %d test facts, %d ambient facts", spec.name, len(tests), len(ambient))
    return WarehouseStore(target)


def open_mart(warehouse_root, name):
    """Open a derived mart read-only"""
    root = mart_root(warehouse_root, str(name).strip().lower())
    if not (root / "MANIFEST").exists():
        raise ValidationError(f"no mart named '{name}' under {Path(warehouse_root) / MARTS_DIR}; derive it first")
    return WarehouseStore(root)
