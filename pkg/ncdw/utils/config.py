"""
Configuration documents.

One TOML file describes a deployment: where the warehouse lives, the
reporting zone, where the link key comes from, the sources and the capacity
inputs. Relative paths are resolved against the file's own folder.
"""
import logging
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Literal

import pydantic
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ncdw.capacity.estimator import (
    DEFAULT_HORIZONS, REFERENCE_CATEGORIES, REFERENCE_DIAGNOSTIC_CENTERS, REFERENCE_WEEKDAY_AVGS, CapacityInputs,
)
from ncdw.core.errors import ConfigError, KeyMaterialError, StorageError
from ncdw.core.time_key import DEFAULT_ZONE_OFFSET_MINUTES
from ncdw.ingest.descriptor import SourceDescriptor, SourceKind
from ncdw.linkage.link_key import MIN_SECRET_BYTES
from ncdw.warehouse.loader import DENGUE_CODES

logger = logging.getLogger(__name__)

DEFAULT_LINK_KEY_ENV = "NCDW_LINK_KEY"
DEFAULT_WAREHOUSE_ROOT = Path("ncdw-warehouse")


class SourceConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: str = Field(min_length=1)
    kind: SourceKind
    zone_offset_minutes: int = Field(default=DEFAULT_ZONE_OFFSET_MINUTES, ge=-720, le=840)
    field_map: dict[str, str]
    code_map: Path | None = None
    units: dict[str, str] = Field(default_factory=dict)

    def to_descriptor(self):
        return SourceDescriptor(
            source_id=self.id,
            kind=self.kind,
            field_map=dict(self.field_map),
            zone_offset_minutes=self.zone_offset_minutes,
            code_map_path=self.code_map,
            units=dict(self.units),
        )


class CategoryConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seats: int = Field(ge=0)
    hospitals: int = Field(ge=0)


class CapacityConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    weekday_avgs: list[float] = Field(default_factory=lambda: list(REFERENCE_WEEKDAY_AVGS), min_length=7,
                                      max_length=7)
    categories: list[CategoryConfig] = Field(
        default_factory=lambda: [CategoryConfig(seats=s, hospitals=n) for s, n in REFERENCE_CATEGORIES]
    )
    diagnostic_centers: int = Field(default=REFERENCE_DIAGNOSTIC_CENTERS, ge=0)
    diagnostic_weight: float = Field(default=0.25, gt=0, le=1)
    record_size_kb: float = Field(default=1.0, gt=0)
    horizons: list[int] = Field(default_factory=lambda: list(DEFAULT_HORIZONS))
    r_bar: float | None = Field(default=None, ge=0)
    rounding: Literal["ceiling", "half_up"] = "ceiling"

    @field_validator("weekday_avgs")
    @classmethod
    def _non_negative(cls, values):
        if any(value < 0 for value in values):
            raise ValueError("weekday averages must be >= 0")
        return values

    def to_inputs(self):
        return CapacityInputs(
            weekday_avgs=tuple(self.weekday_avgs),
            categories=tuple((category.seats, category.hospitals) for category in self.categories),
            diagnostic_centers=self.diagnostic_centers,
            diagnostic_weight=self.diagnostic_weight,
            record_size_kb=self.record_size_kb,
            horizon_days=tuple(self.horizons),
            r_bar=self.r_bar,
            rounding=self.rounding,
        )


class NcdwConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    warehouse_root: Path = DEFAULT_WAREHOUSE_ROOT
    reporting_zone_offset_minutes: int = Field(default=DEFAULT_ZONE_OFFSET_MINUTES, ge=-720, le=840)
    link_key_env: str = DEFAULT_LINK_KEY_ENV
    link_key_file: Path | None = None
    dengue_codes: list[str] = Field(default_factory=lambda: list(DENGUE_CODES), min_length=1)
    sources: list[SourceConfig] = Field(default_factory=list)
    capacity: CapacityConfig = Field(default_factory=CapacityConfig)

    @model_validator(mode="after")
    def _unique_sources(self):
        ids = [source.id for source in self.sources]
        duplicates = sorted({source_id for source_id in ids if ids.count(source_id) > 1})
        if duplicates:
            raise ValueError(f"duplicate source ids: {', '.join(duplicates)}")
        return self

    def source(self, source_id):
        for source in self.sources:
            if source.id == source_id:
                return source
        known = ", ".join(source.id for source in self.sources) or "none configured"
        raise ConfigError(f"unknown source '{source_id}' (known: {known})")

    def resolved(self, base_dir):
        """Copy with every relative path made relative to base_dir"""
        base_dir = Path(base_dir)

        def resolve(path):
            return path if path is None or path.is_absolute() else base_dir / path

        return self.model_copy(update={
            "warehouse_root": resolve(self.warehouse_root),
            "link_key_file": resolve(self.link_key_file),
            "sources": [source.model_copy(update={"code_map": resolve(source.code_map)}) for source in self.sources],
        })


def _read_toml(path):
    path = Path(path)
    try:
        with open(path, "rb") as handle:
            return tomllib.load(handle)
    except OSError as e:
        raise StorageError(f"cannot read configuration {path}: {e}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e


def _describe(error):
    first = error.errors()[0]
    where = ".".join(str(part) for part in first["loc"]) or "document"
    return f"{where}: {first['msg']}"


def load_config(path=None):
    """
    Load and validate a configuration document.

    Args:
        path: TOML file; None gives the defaults relative to the working directory

    Returns:
        NcdwConfig with resolved paths
    """
    if path is None:
        return NcdwConfig()
    document = _read_toml(path)
    try:
        config = NcdwConfig.model_validate(document)
    except pydantic.ValidationError as e:
        raise ConfigError(f"{path}: {_describe(e)}") from e
    logger.info("loaded configuration %s (%d sources)", path, len(config.sources))
    return config.resolved(Path(path).parent)


def load_capacity_config(path):
    """Capacity inputs from a `[capacity]` table or from top-level keys"""
    document = _read_toml(path)
    section = document.get("capacity", document)
    try:
        return CapacityConfig.model_validate(section).to_inputs()
    except pydantic.ValidationError as e:
        raise ConfigError(f"{path}: {_describe(e)}") from e


def _decode_key(text, origin):
    text = text.strip()
    try:
        secret = bytes.fromhex(text)
    except ValueError:
        raise KeyMaterialError(f"link key from {origin} is not hexadecimal") from None
    if len(secret) < MIN_SECRET_BYTES:
        raise KeyMaterialError(f"link key from {origin} must be at least {MIN_SECRET_BYTES} bytes")
    return secret


def resolve_link_key(link_key_file=None, config=None, environ=None):
    """
    Find the link key: an explicit key file first, then the configured key
    file, then the configured environment variable.

    Returns:
        bytes
    """
    environ = os.environ if environ is None else environ
    config = config or NcdwConfig()
    for candidate in (link_key_file, config.link_key_file):
        if candidate is not None:
            try:
                text = Path(candidate).read_text(encoding="utf-8")
            except OSError as e:
                raise StorageError(f"cannot read link key file {candidate}: {e}") from e
            return _decode_key(text, "key file")
    text = environ.get(config.link_key_env)
    if text is None:
        raise KeyMaterialError(
            f"no link key: set {config.link_key_env} (hex) or pass --link-key-file"
        )
    return _decode_key(text, f"${config.link_key_env}")
