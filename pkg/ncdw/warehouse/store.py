import csv
import hashlib
import io
import json
import logging
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pandas as pd

from ncdw.core.errors import StorageError, ValidationError
from ncdw.core.surrogate import KeyAllocator
from ncdw.core.time_key import DEFAULT_ZONE_OFFSET_MINUTES
from ncdw.warehouse.schema import DIMENSIONS, FACTS, dimension_schema, fact_schema, time_attributes

logger = logging.getLogger(__name__)

MANIFEST = "MANIFEST"
LOCK_FILE = ".writer.lock"
FORMAT_VERSION = 1


def _sha256(data):
    return hashlib.sha256(data).hexdigest()


def _atomic_write_bytes(path, data):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}-", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp, path)
    except OSError as e:
        Path(tmp).unlink(missing_ok=True)
        raise StorageError(f"cannot write {path}: {e}") from e


def _serialize_dimension(columns, rows):
    buffer = io.StringIO()
    writer = csv.writer(buffer, delimiter="\t", lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    return buffer.getvalue().encode("utf-8")


def _serialize_fact(schema, frame):
    out = frame.loc[:, list(schema.columns)].copy()
    for column in schema.bool_columns:
        out[column] = out[column].astype("int8")
    return out.to_csv(sep="\t", index=False, na_rep="", lineterminator="\n").encode("utf-8")


def empty_fact_frame(name):
    """Zero-row frame with the column dtypes of a fact table"""
    schema = fact_schema(name)
    columns = {}
    for column in schema.columns:
        if column in schema.int_columns:
            columns[column] = pd.Series(dtype="int64")
        elif column in schema.bool_columns:
            columns[column] = pd.Series(dtype="bool")
        elif column in schema.text_columns:
            columns[column] = pd.Series(dtype="object")
        else:
            columns[column] = pd.Series(dtype="float64")
    return pd.DataFrame(columns)


def conform_fact_frame(name, frame):
    """Cast a frame to the column order and dtypes of a fact table"""
    schema = fact_schema(name)
    missing = [column for column in schema.columns if column not in frame.columns]
    if missing:
        raise ValidationError(f"fact '{schema.name}' rows lack columns: {', '.join(missing)}")
    out = frame.loc[:, list(schema.columns)].copy()
    for column in schema.columns:
        if column in schema.int_columns:
            out[column] = out[column].astype("int64")
        elif column in schema.bool_columns:
            out[column] = out[column].astype("bool")
        elif column in schema.text_columns:
            out[column] = out[column].astype("object")
        else:
            out[column] = pd.to_numeric(out[column], errors="coerce").astype("float64")
    return out.reset_index(drop=True)


def _read_fact_segment(schema, path):
    dtypes = {column: "int64" for column in schema.int_columns}
    dtypes.update({column: "int8" for column in schema.bool_columns})
    dtypes.update({column: "object" for column in schema.text_columns})
    frame = pd.read_csv(path, sep="\t", dtype=dtypes, keep_default_na=False, na_values=[""],
                        float_precision="round_trip")
    return conform_fact_frame(schema.name, frame)


class WarehouseStore:
    """
    Star-schema store kept in memory and persisted as TSV files under a root
    directory: one file per dimension, append-only segment files per fact
    table, and a MANIFEST listing what is committed.

    Opening a store takes a snapshot of the committed state; later commits by
    another writer are not seen until reopening. Writes go through writing(),
    which holds a lock file so only one writer works on a root at a time.
    """
    def __init__(self, root, reporting_offset_minutes=None):
        self.root = Path(root)
        self.reporting_offset_minutes = DEFAULT_ZONE_OFFSET_MINUTES
        self.loaded_batches = []
        self._dim_rows = {name: [] for name in DIMENSIONS}
        self._dim_committed = {name: 0 for name in DIMENSIONS}
        self._lookup = {name: {} for name in DIMENSIONS}
        self._facts = {name: empty_fact_frame(name) for name in FACTS}
        self._pending = {name: [] for name in FACTS}
        self._replaced = set()
        self._segments = {name: [] for name in FACTS}
        self._next_segment = {name: 1 for name in FACTS}
        self._frames = {}
        self.allocator = KeyAllocator()
        self._load()
        if reporting_offset_minutes is not None:
            if self.has_data() and reporting_offset_minutes != self.reporting_offset_minutes:
                raise ValidationError(
                    f"warehouse at {self.root} uses reporting offset {self.reporting_offset_minutes} minutes"
                )
            self.reporting_offset_minutes = int(reporting_offset_minutes)

    @classmethod
    def open(cls, root, reporting_offset_minutes=None):
        return cls(root, reporting_offset_minutes)

    # ------------------------------------------------------------------ loading

    def _load(self):
        manifest_path = self.root / MANIFEST
        if not manifest_path.exists():
            return
        try:
            manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as e:
            raise StorageError(f"cannot read {manifest_path}: {e}") from e
        if manifest.get("format") != FORMAT_VERSION:
            raise StorageError(f"{manifest_path}: unsupported format {manifest.get('format')!r}")

        self.reporting_offset_minutes = int(manifest["reporting_offset_minutes"])
        self.loaded_batches = list(manifest.get("loaded_batches", []))

        for name, entry in manifest["dimensions"].items():
            self._load_dimension(dimension_schema(name), entry)
        for name, entry in manifest["facts"].items():
            self._load_fact(fact_schema(name), entry)

        self.allocator = KeyAllocator({
            name: (rows[-1][0] if rows else None) for name, rows in self._dim_rows.items()
        })

    def _load_dimension(self, schema, entry):
        path = self.root / f"dim_{schema.name}.tsv"
        committed = int(entry["rows"])
        rows = []
        if committed:
            try:
                with open(path, newline="", encoding="utf-8") as handle:
                    reader = csv.reader(handle, delimiter="\t")
                    header = next(reader)
                    if tuple(header) != schema.columns:
                        raise StorageError(f"{path}: unexpected header {header}")
                    for raw in reader:
                        if len(rows) == committed:
                            break
                        rows.append(self._typed_dimension_row(schema, raw))
            except (OSError, StopIteration, ValueError) as e:
                raise StorageError(f"cannot read {path}: {e}") from e
        if len(rows) != committed:
            raise StorageError(f"{path}: expected {committed} committed rows, found {len(rows)}")
        if _sha256(_serialize_dimension(schema.columns, rows)) != entry["checksum"]:
            raise StorageError(f"{path}: checksum mismatch")
        self._dim_rows[schema.name] = rows
        self._dim_committed[schema.name] = committed
        self._lookup[schema.name] = {
            self._natural_of(schema, row): row[0] for row in rows
        }

    @staticmethod
    def _typed_dimension_row(schema, raw):
        values = [int(raw[0])]
        for column, value in zip(schema.attributes, raw[1:]):
            values.append(int(value) if column in schema.int_columns else value)
        return tuple(values)

    @staticmethod
    def _natural_of(schema, row):
        positions = {column: i + 1 for i, column in enumerate(schema.attributes)}
        return tuple(row[positions[column]] for column in schema.natural_key)

    def _load_fact(self, schema, entry):
        directory = self.root / f"fact_{schema.name}"
        frames = []
        for segment in entry["segments"]:
            path = directory / segment["file"]
            try:
                data = path.read_bytes()
            except OSError as e:
                raise StorageError(f"cannot read {path}: {e}") from e
            if _sha256(data) != segment["checksum"]:
                raise StorageError(f"{path}: checksum mismatch")
            frame = _read_fact_segment(schema, io.BytesIO(data))
            if len(frame) != int(segment["rows"]):
                raise StorageError(f"{path}: expected {segment['rows']} rows, found {len(frame)}")
            frames.append(frame)
        self._facts[schema.name] = (
            pd.concat(frames, ignore_index=True) if frames else empty_fact_frame(schema.name)
        )
        self._segments[schema.name] = [dict(segment) for segment in entry["segments"]]
        self._next_segment[schema.name] = int(entry.get("next_segment", len(entry["segments"]) + 1))

    # --------------------------------------------------------------- dimensions

    def has_data(self):
        return any(self._dim_rows.values()) or any(len(frame) for frame in self._facts.values())

    def upsert_dimension(self, dim, natural_attrs):
        """
        Return the surrogate key of a dimension member, inserting it if new.

        Args:
            dim: Dimension name
            natural_attrs: Attribute map containing at least the natural key

        Returns:
            int: existing key on a natural-key match, else a freshly allocated one
        """
        schema = dimension_schema(dim)
        if schema.name == "time":
            natural_attrs = time_attributes(natural_attrs["day"])
        try:
            natural = tuple(schema.normalize(column, natural_attrs[column]) for column in schema.natural_key)
        except KeyError as e:
            raise ValidationError(f"dimension '{schema.name}' needs natural key field {e.args[0]!r}") from e

        lookup = self._lookup[schema.name]
        key = lookup.get(natural)
        if key is not None:
            return key

        key = self.allocator.next_key(schema.name)
        values = dict(zip(schema.natural_key, natural))
        row = [key]
        for column in schema.attributes:
            if column in values:
                row.append(values[column])
            else:
                row.append(schema.normalize(column, natural_attrs.get(column, "")))
        self._dim_rows[schema.name].append(tuple(row))
        lookup[natural] = key
        self._frames.pop(("dim", schema.name), None)
        self._frames.pop(("wide", "testresult"), None)
        self._frames.pop(("wide", "ambient"), None)
        return key

    def lookup_key(self, dim, natural_attrs):
        """Key of an existing dimension member, or None"""
        schema = dimension_schema(dim)
        natural = tuple(schema.normalize(column, natural_attrs[column]) for column in schema.natural_key)
        return self._lookup[schema.name].get(natural)

    def dimension(self, name):
        """Dimension table as a DataFrame (key column plus attributes)"""
        schema = dimension_schema(name)
        cache_key = ("dim", schema.name)
        if cache_key not in self._frames:
            frame = pd.DataFrame(self._dim_rows[schema.name], columns=list(schema.columns))
            frame["key"] = frame["key"].astype("int64")
            for column in schema.int_columns:
                frame[column] = frame[column].astype("int64")
            self._frames[cache_key] = frame
        return self._frames[cache_key]

    def adopt_dimension(self, name, table):
        """
        Take over another store's dimension rows with their keys unchanged.
        Only allowed while this store's dimension is still empty.
        """
        schema = dimension_schema(name)
        if self._dim_rows[schema.name]:
            raise ValidationError(f"dimension '{schema.name}' already has rows")
        rows = [self._typed_dimension_row(schema, [str(value) for value in row])
                for row in table.loc[:, list(schema.columns)].itertuples(index=False, name=None)]
        self._dim_rows[schema.name] = rows
        self._lookup[schema.name] = {self._natural_of(schema, row): row[0] for row in rows}
        snapshot = self.allocator.snapshot()
        snapshot[schema.name] = rows[-1][0] if rows else None
        self.allocator = KeyAllocator(snapshot)
        self._frames.pop(("dim", schema.name), None)

    def dimension_row_counts(self):
        return {name: len(rows) for name, rows in self._dim_rows.items()}

    # -------------------------------------------------------------------- facts

    def fact(self, name):
        """Fact table including rows appended but not yet committed"""
        schema = fact_schema(name)
        if self._pending[schema.name]:
            self._facts[schema.name] = pd.concat(
                [self._facts[schema.name]] + self._pending[schema.name], ignore_index=True
            )
            self._pending[schema.name] = []
        return self._facts[schema.name]

    def append_facts(self, name, frame):
        schema = fact_schema(name)
        if len(frame) == 0:
            return
        self._pending[schema.name].append(conform_fact_frame(schema.name, frame))
        self._frames.pop(("wide", schema.name), None)

    def replace_facts(self, name, frame):
        """Replace the whole table; persisted as a fresh single segment on commit"""
        schema = fact_schema(name)
        self._facts[schema.name] = conform_fact_frame(schema.name, frame)
        self._pending[schema.name] = []
        self._replaced.add(schema.name)
        self._frames.pop(("wide", schema.name), None)

    def day_labels(self, times):
        """Calendar day (ISO text) of epoch seconds in the reporting zone"""
        shifted = pd.to_datetime(np.asarray(times, dtype="int64") + self.reporting_offset_minutes * 60, unit="s")
        return pd.Series(shifted.strftime("%Y-%m-%d"), index=getattr(times, "index", None))

    def wide_frame(self, name):
        """
        Fact table joined with every referenced dimension's attributes and
        the TIME dimension (through the fact's day in the reporting zone).
        """
        schema = fact_schema(name)
        cache_key = ("wide", schema.name)
        if cache_key in self._frames and not self._pending[schema.name]:
            return self._frames[cache_key]

        wide = self.fact(schema.name).copy()
        for column, dim in schema.references.items():
            table = self.dimension(dim).rename(columns={"key": column})
            wide = wide.merge(table, on=column, how="left", sort=False)
        wide["day"] = self.day_labels(wide["time"]).to_numpy()
        time_table = self.dimension("time").drop(columns=["key"])
        wide = wide.merge(time_table, on="day", how="left", sort=False)
        self._frames[cache_key] = wide
        return wide

    # ------------------------------------------------------------------- commit

    @contextmanager
    def writing(self):
        """Hold the single-writer lock for the duration of a block"""
        try:
            self.root.mkdir(parents=True, exist_ok=True)
            fd = os.open(self.root / LOCK_FILE, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise StorageError(f"warehouse {self.root} is locked by another writer "
                               f"(remove {LOCK_FILE} if no writer is running)") from None
        except OSError as e:
            raise StorageError(f"cannot lock warehouse {self.root}: {e}") from e
        try:
            os.write(fd, str(os.getpid()).encode())
            os.close(fd)
            yield self
        finally:
            (self.root / LOCK_FILE).unlink(missing_ok=True)

    def commit(self, loaded_batch=None):
        """
        Persist pending changes: new fact segments first, then dimension
        files, then the MANIFEST, which is what makes them visible.
        """
        self.root.mkdir(parents=True, exist_ok=True)
        written = []
        segments = {name: list(entries) for name, entries in self._segments.items()}
        next_segment = dict(self._next_segment)
        obsolete = []
        try:
            for name, schema in FACTS.items():
                table = self.fact(name)
                if name in self._replaced:
                    obsolete.extend(self.root / f"fact_{name}" / entry["file"] for entry in segments[name])
                    segments[name] = []
                    fresh = table
                else:
                    fresh = table.iloc[self._committed_rows(name):]
                if len(fresh) == 0:
                    continue
                directory = self.root / f"fact_{name}"
                directory.mkdir(exist_ok=True)
                data = _serialize_fact(schema, fresh)
                file_name = f"seg_{next_segment[name]:06d}.tsv"
                next_segment[name] += 1
                _atomic_write_bytes(directory / file_name, data)
                written.append(directory / file_name)
                segments[name].append({"file": file_name, "rows": len(fresh), "checksum": _sha256(data)})

            dimensions = {}
            for name, schema in DIMENSIONS.items():
                rows = self._dim_rows[name]
                data = _serialize_dimension(schema.columns, rows)
                path = self.root / f"dim_{name}.tsv"
                if len(rows) != self._dim_committed[name] or not path.exists():
                    _atomic_write_bytes(path, data)
                dimensions[name] = {"rows": len(rows), "checksum": _sha256(data)}

            batches = list(self.loaded_batches)
            if loaded_batch is not None and loaded_batch not in batches:
                batches.append(loaded_batch)
            manifest = {
                "format": FORMAT_VERSION,
                "reporting_offset_minutes": self.reporting_offset_minutes,
                "loaded_batches": batches,
                "dimensions": dimensions,
                "facts": {
                    name: {"segments": segments[name], "next_segment": next_segment[name]} for name in FACTS
                },
            }
            _atomic_write_bytes(self.root / MANIFEST,
                                json.dumps(manifest, indent=1, sort_keys=True).encode("utf-8"))
        except StorageError:
            for path in written:
                path.unlink(missing_ok=True)
            raise

        self._replaced = set()
        self._segments = segments
        self._next_segment = next_segment
        self._dim_committed = self.dimension_row_counts()
        self.loaded_batches = batches
        for path in obsolete:
            path.unlink(missing_ok=True)
        logger.info("committed warehouse %s (batches loaded: %d)", self.root, len(batches))

    def _committed_rows(self, name):
        return sum(int(entry["rows"]) for entry in self._segments[name])

    def rollback(self):
        """Discard everything not yet committed by reloading the snapshot"""
        offset = self.reporting_offset_minutes
        fresh = WarehouseStore(self.root)
        if not (self.root / MANIFEST).exists():
            fresh.reporting_offset_minutes = offset
        self.__dict__.update(fresh.__dict__)
        logger.warning("rolled back uncommitted changes in %s", self.root)

    def compact(self):
        """Merge every fact table's segments into one segment"""
        for name in FACTS:
            if len(self._segments[name]) > 1:
                self.replace_facts(name, self.fact(name))
        self.commit()
