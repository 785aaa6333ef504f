"""
Cube specifications, cuboids and lattices.

A cuboid keeps exact accumulators per cell: a row count and, for every
measured column, the exact sum plus the number of non-null values. A column
whose values all have a short decimal form is summed as int64 at a fixed
decimal scale; any other column is summed as exact fractions. Averages and
percentages are derived from those on demand, so any roll-up gives the same
numbers as a direct group-by.
"""
import json
import logging
import re
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from pathlib import Path

import numpy as np
import pandas as pd

from ncdw.core.errors import LatticeError, SpecError, StorageError
from ncdw.warehouse.schema import DIMENSIONS, fact_schema

logger = logging.getLogger(__name__)

MAX_DIMS = 5
MAX_DECIMALS = 9
COUNT = "__count"

MEASURE_KINDS = ("count", "sum", "avg", "pct_true")
_MEASURE = re.compile(r"^\s*(count|sum|avg|pct_true)\s*(?:\(\s*([A-Za-z_][A-Za-z0-9_]*)\s*\))?\s*$")

_DIMENSION_ALIASES = {"geo": "geography", "attribute": "test_attribute", "test": "test_attribute"}


def sum_column(column):
    return f"__sum__{column}"


def n_column(column):
    return f"__n__{column}"


@dataclass(frozen=True)
class Measure:
    kind: str
    column: str | None = None

    @classmethod
    def parse(cls, text):
        """Parse `count`, `sum(x)`, `avg(x)` or `pct_true(x)`"""
        if isinstance(text, Measure):
            return text
        match = _MEASURE.match(str(text))
        if not match:
            raise SpecError(f"unknown measure {text!r}; expected count, sum(x), avg(x) or pct_true(x)")
        kind, column = match.group(1), match.group(2)
        if kind == "count" and column is not None:
            raise SpecError("count takes no column")
        if kind != "count" and column is None:
            raise SpecError(f"{kind} needs a column, e.g. {kind}(result_value)")
        return cls(kind, column)

    @property
    def label(self):
        return "count" if self.kind == "count" else f"{self.kind}_{self.column}"

    def __str__(self):
        return "count" if self.kind == "count" else f"{self.kind}({self.column})"


@dataclass(frozen=True)
class DimRef:
    """
    A cube dimension: either `dimension@level` (a dimension attribute) or a
    plain column of the fact table. The canonical name is lower case.
    """
    name: str
    column: str
    dimension: str | None = None
    folded: bool = False

    @classmethod
    def parse(cls, text):
        if isinstance(text, DimRef):
            return text
        raw = str(text).strip().lower()
        if not raw:
            raise SpecError("empty dimension reference")
        if "@" in raw:
            dim, level = (part.strip() for part in raw.split("@", 1))
            dim = _DIMENSION_ALIASES.get(dim, dim)
            if dim not in DIMENSIONS:
                raise SpecError(f"unknown dimension {dim!r} in {text!r}")
            schema = DIMENSIONS[dim]
            if level not in schema.attributes:
                raise SpecError(f"dimension {dim} has no level {level!r}; levels: {', '.join(schema.attributes)}")
            return cls(f"{dim}@{level}", level, dim, level in schema.folded_columns)
        dim = _DIMENSION_ALIASES.get(raw, raw)
        if dim in DIMENSIONS:
            schema = DIMENSIONS[dim]
            level = schema.default_level
            return cls(f"{dim}@{level}", level, dim, level in schema.folded_columns)
        return cls(raw, raw)

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class CubeSpec:
    """
    What to materialize: a fact table, 1 to 5 dimensions and the measures
    kept per cell.
    """
    fact: str
    dims: tuple
    measures: tuple = (Measure("count"),)

    def __post_init__(self):
        dims = tuple(DimRef.parse(dim) for dim in self.dims)
        if not 1 <= len(dims) <= MAX_DIMS:
            raise SpecError(f"a cube needs between 1 and {MAX_DIMS} dimensions, got {len(dims)}")
        names = [dim.name for dim in dims]
        if len(set(names)) != len(names):
            raise SpecError(f"cube dimensions must be distinct: {', '.join(names)}")
        measures = tuple(Measure.parse(measure) for measure in self.measures)
        if not measures:
            raise SpecError("a cube needs at least one measure")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "measures", measures)

    @classmethod
    def build(cls, fact, dims, measures=("count",)):
        """Spec from CLI-style text: dims and measures as lists or comma-separated strings"""
        if isinstance(dims, str):
            dims = [dim for dim in dims.split(",") if dim.strip()]
        if isinstance(measures, str):
            measures = _split_measures(measures)
        return cls(fact, tuple(dims), tuple(measures))

    @property
    def dim_names(self):
        return tuple(dim.name for dim in self.dims)

    @property
    def measured_columns(self):
        columns = []
        for measure in self.measures:
            if measure.column is not None and measure.column not in columns:
                columns.append(measure.column)
        return tuple(columns)

    @property
    def accumulators(self):
        columns = [COUNT]
        for column in self.measured_columns:
            columns += [sum_column(column), n_column(column)]
        return tuple(columns)

    def order(self, dims):
        """Canonical (spec-ordered) tuple of dimension names for any subset"""
        wanted = {DimRef.parse(dim).name for dim in dims}
        unknown = wanted.difference(self.dim_names)
        if unknown:
            raise LatticeError(f"dimension(s) not in this cube: {', '.join(sorted(unknown))}")
        return tuple(name for name in self.dim_names if name in wanted)

    def validate_fact(self):
        """Check the fact table name against the warehouse schema"""
        try:
            fact_schema(self.fact)
        except Exception as e:
            raise SpecError(str(e)) from e


def _split_measures(text):
    parts, depth, current = [], 0, ""
    for char in text:
        if char == "(":
            depth += 1
        elif char == ")":
            depth -= 1
        if char == "," and depth == 0:
            parts.append(current)
            current = ""
        else:
            current += char
    if current.strip():
        parts.append(current)
    return [part.strip() for part in parts if part.strip()]


def to_exact(values):
    """
    Exact summands of a numeric or boolean column; nulls become 0.

    The smallest decimal scale at which every value round-trips is used,
    provided the column total cannot overflow int64. Otherwise each value
    becomes the Fraction it stores exactly.

    Returns:
        (summands, present, scale) with scale None for Fraction summands
    """
    numeric = pd.to_numeric(values, errors="coerce").astype("float64").to_numpy()
    present = ~np.isnan(numeric)
    finite = numeric[present]
    if not np.isfinite(finite).all():
        raise SpecError("measure values must be finite")
    for scale in range(MAX_DECIMALS + 1):
        scaled = np.rint(finite * 10.0 ** scale)
        if len(finite) and np.abs(scaled).max() * len(finite) >= 2.0 ** 62:
            break
        if np.array_equal(scaled / 10.0 ** scale, finite):
            summands = np.zeros(len(numeric), dtype="int64")
            summands[present] = scaled.astype("int64")
            return summands, present.astype("int64"), scale
    summands = np.full(len(numeric), Fraction(0), dtype=object)
    summands[present] = [Fraction(float(value)) for value in finite]
    return summands, present.astype("int64"), None


def _accumulator_dtypes(frame, accumulators):
    return {column: "object" if frame[column].dtype == object else "int64" for column in accumulators}


def aggregate(frame, by, accumulators):
    """
    Sum accumulator columns per distinct `by` tuple.

    Returns:
        DataFrame sorted lexicographically on `by`, fresh index
    """
    by = list(by)
    accumulators = list(accumulators)
    dtypes = _accumulator_dtypes(frame, accumulators)
    if not by:
        if len(frame) == 0:
            return pd.DataFrame({column: pd.Series(dtype=dtypes[column]) for column in accumulators})
        totals = {column: [frame[column].sum()] for column in accumulators}
        return pd.DataFrame(totals, columns=accumulators).astype(dtypes)
    grouped = frame.groupby(by, sort=True, dropna=False, observed=True)[accumulators].sum()
    return grouped.reset_index().astype(dtypes)


class Cuboid:
    """
    One group-by of a cube: cells keyed by values of `group_dims`, each
    carrying the exact accumulators of the cube's measures.
    """
    def __init__(self, spec, group_dims, frame, scales=None):
        self.spec = spec
        self.group_dims = tuple(group_dims)
        self.frame = frame
        # measured column -> decimal scale of its sum accumulator, None for Fractions
        self.scales = dict(scales or {})

    def __len__(self):
        return len(self.frame)

    def __repr__(self):
        return f"Cuboid({', '.join(self.group_dims) or 'apex'}; {len(self)} cells)"

    @property
    def name(self):
        return "apex" if not self.group_dims else "__".join(dim.replace("@", "-") for dim in self.group_dims)

    @property
    def total_count(self):
        return int(self.frame[COUNT].sum())

    def measure_frame(self):
        """Cells with the cube's measures computed from the accumulators"""
        out = self.frame.loc[:, list(self.group_dims)].copy()
        for measure in self.spec.measures:
            if measure.kind == "count":
                out["count"] = self.frame[COUNT].astype("int64")
                continue
            totals = self.exact_totals(measure.column)
            present = self.frame[n_column(measure.column)].astype("int64").tolist()
            if measure.kind == "sum":
                values = [float(total) for total in totals]
            elif measure.kind == "avg":
                values = [float(total / n) if n else np.nan for total, n in zip(totals, present)]
            else:
                values = [float(100 * total / n) if n else np.nan for total, n in zip(totals, present)]
            out[measure.label] = pd.Series(values, index=out.index, dtype="float64")
        return out

    def exact_totals(self, column):
        """Per-cell sums of a measured column as Fractions"""
        totals = self.frame[sum_column(column)]
        scale = self.scales.get(column, 0)
        if scale is None:
            return [Fraction(total) for total in totals]
        return [Fraction(int(total), 10 ** scale) for total in totals]

    def cells(self):
        """Mapping from dimension-value tuple to measure dict"""
        measures = self.measure_frame()
        labels = [measure.label for measure in self.spec.measures]
        result = {}
        for row in measures.itertuples(index=False):
            values = dict(zip(measures.columns, row))
            key = tuple(values[dim] for dim in self.group_dims)
            result[key] = {label: values[label] for label in labels}
        return result

    def counts(self):
        """Mapping from dimension-value tuple to cell count"""
        keys = self.frame.loc[:, list(self.group_dims)].itertuples(index=False, name=None)
        return dict(zip(keys, self.frame[COUNT].astype(int)))

    def equals(self, other):
        return (self.group_dims == other.group_dims and self.scales == other.scales
                and self.frame.equals(other.frame))

    def diff(self, other, limit=5):
        """Sample of cells that differ between two cuboids with the same dims"""
        by = list(self.group_dims)
        if not by:
            left = self.frame.to_dict(orient="records")
            right = other.frame.to_dict(orient="records")
            return [] if left == right else [{"cuboid": "apex", "left": left, "right": right}]
        merged = self.frame.merge(other.frame, on=by, how="outer", suffixes=("_left", "_right"), indicator=True)
        differing = merged["_merge"] != "both"
        for column in self.spec.accumulators:
            differing |= merged[f"{column}_left"] != merged[f"{column}_right"]
        sample = merged.loc[differing].head(limit)
        return [{"cuboid": self.name, **row} for row in sample.to_dict(orient="records")]

    def select(self, mask):
        return Cuboid(self.spec, self.group_dims, self.frame.loc[mask].reset_index(drop=True), self.scales)

    def to_tsv(self, path):
        """Export one row per cell: group dims then measures"""
        try:
            self.measure_frame().to_csv(path, sep="\t", index=False, na_rep="", lineterminator="\n")
        except OSError as e:
            raise StorageError(f"cannot write cuboid {path}: {e}") from e
        return Path(path)


class CubeLattice:
    """
    All 2^d cuboids of a cube, from the base (every dimension) to the apex
    (no dimension), keyed by spec-ordered dimension tuples.
    """
    def __init__(self, spec, cuboids, strategy=""):
        self.spec = spec
        self.strategy = strategy
        self._cuboids = dict(cuboids)

    def __len__(self):
        return len(self._cuboids)

    def __iter__(self):
        return iter(self._cuboids[key] for key in lattice_order(self.spec))

    def __contains__(self, dims):
        try:
            return self.spec.order(dims) in self._cuboids
        except LatticeError:
            return False

    def cuboid(self, dims):
        key = self.spec.order(dims)
        if key not in self._cuboids:
            raise LatticeError(f"no cuboid for ({', '.join(key) or 'apex'}) in this lattice")
        return self._cuboids[key]

    @property
    def base(self):
        return self.cuboid(self.spec.dim_names)

    @property
    def apex(self):
        return self.cuboid(())

    def equals(self, other):
        if set(self._cuboids) != set(other._cuboids):
            return False
        return all(cuboid.equals(other._cuboids[key]) for key, cuboid in self._cuboids.items())

    def diff(self, other, limit=5):
        missing = set(self._cuboids).symmetric_difference(other._cuboids)
        if missing:
            return [{"cuboid": "missing", "dims": sorted(missing)}]
        sample = []
        for key in lattice_order(self.spec):
            if len(sample) >= limit:
                break
            if not self._cuboids[key].equals(other._cuboids[key]):
                sample.extend(self._cuboids[key].diff(other._cuboids[key], limit - len(sample)))
        return sample

    def export(self, directory):
        """
        Write every cuboid as a TSV file plus a lattice.json manifest
        listing the spec, the strategy and each file's cell count.
        """
        directory = Path(directory)
        try:
            directory.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise StorageError(f"cannot create {directory}: {e}") from e
        entries = []
        for cuboid in self:
            file_name = f"cuboid_{cuboid.name}.tsv"
            cuboid.to_tsv(directory / file_name)
            entries.append({"dims": list(cuboid.group_dims), "file": file_name, "cells": len(cuboid)})
        manifest = {
            "fact": fact_schema(self.spec.fact).name,
            "dims": list(self.spec.dim_names),
            "measures": [str(measure) for measure in self.spec.measures],
            "strategy": self.strategy,
            "cuboids": entries,
        }
        try:
            (directory / "lattice.json").write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
        except OSError as e:
            raise StorageError(f"cannot write lattice manifest in {directory}: {e}") from e
        return directory


def lattice_order(spec):
    """Every subset of the spec's dimensions, base first, apex last"""
    names = spec.dim_names
    order = []
    for size in range(len(names), -1, -1):
        for positions in combinations(range(len(names)), size):
            order.append(tuple(names[i] for i in positions))
    return order

