"""OLAP verbs over lattices and cuboids."""
import logging
from datetime import date

import pandas as pd

from ncdw.core.errors import LatticeError, QueryError
from ncdw.core.text import normalize_text
from ncdw.olap.cube import CubeLattice, CubeSpec, Cuboid, DimRef, aggregate
from ncdw.warehouse.schema import time_attributes

logger = logging.getLogger(__name__)


def _resolve_dim(cuboid, dim):
    name = DimRef.parse(dim).name
    if name not in cuboid.group_dims:
        raise QueryError(f"dimension '{name}' is not a grouping dimension of {cuboid!r}")
    return name


def rollup(target, from_dims, drop_dim=None):
    """
    Remove one dimension by aggregating over it.

    With a lattice, `from_dims` names the starting cuboid and the stored
    cuboid without `drop_dim` is returned. With a cuboid, the call is
    rollup(cuboid, drop_dim) and the cells are re-aggregated.

    Returns:
        Cuboid
    """
    if isinstance(target, Cuboid):
        drop = _resolve_dim(target, from_dims)
        keep = tuple(dim for dim in target.group_dims if dim != drop)
        return Cuboid(target.spec, keep, aggregate(target.frame, keep, target.spec.accumulators), target.scales)

    if not isinstance(target, CubeLattice):
        raise LatticeError("rollup needs a lattice or a cuboid")
    start = target.spec.order(from_dims)
    if start not in target:
        raise LatticeError(f"no cuboid for ({', '.join(start)}) in this lattice")
    drop = DimRef.parse(drop_dim).name
    if drop not in start:
        raise LatticeError(f"'{drop}' is not one of ({', '.join(start)})")
    return target.cuboid(tuple(dim for dim in start if dim != drop))


def drilldown(lattice, from_dims, add_dim):
    """The stored cuboid one level finer: `from_dims` plus `add_dim`"""
    if not isinstance(lattice, CubeLattice):
        raise LatticeError("drilldown needs a lattice; a cuboid has no finer cells")
    add = DimRef.parse(add_dim).name
    start = lattice.spec.order(from_dims)
    if add in start:
        raise LatticeError(f"'{add}' is already one of ({', '.join(start)})")
    target_dims = lattice.spec.order(start + (add,))
    if target_dims not in lattice:
        raise LatticeError(f"no cuboid for ({', '.join(target_dims)}) in this lattice")
    return lattice.cuboid(target_dims)


def _coerce(cuboid, name, value):
    series = cuboid.frame[name]
    ref = next(dim for dim in cuboid.spec.dims if dim.name == name)
    if pd.api.types.is_bool_dtype(series):
        return str(value).strip().lower() in ("true", "1", "yes") if isinstance(value, str) else bool(value)
    if pd.api.types.is_numeric_dtype(series):
        try:
            return float(value)
        except (TypeError, ValueError):
            raise QueryError(f"dimension '{name}' is numeric; cannot match {value!r}") from None
    if ref.folded:
        return normalize_text(value)
    return str(value).strip()


def _target_cuboid(target):
    return target.base if isinstance(target, CubeLattice) else target


def slice_cube(target, dim, value):
    """Cells whose `dim` equals `value`; a lattice is sliced at its base cuboid"""
    cuboid = _target_cuboid(target)
    name = _resolve_dim(cuboid, dim)
    return cuboid.select(cuboid.frame[name] == _coerce(cuboid, name, value))


def dice(target, selection):
    """
    Cells matching every dimension's allowed value set.

    Args:
        target: CubeLattice or Cuboid
        selection: mapping dimension -> iterable of allowed values

    Returns:
        Cuboid
    """
    cuboid = _target_cuboid(target)
    mask = pd.Series(True, index=cuboid.frame.index)
    for dim, values in selection.items():
        name = _resolve_dim(cuboid, dim)
        allowed = [_coerce(cuboid, name, value) for value in values]
        mask &= cuboid.frame[name].isin(allowed)
    return cuboid.select(mask)


_TIME_LEVELS = ("day", "month", "year", "month_of_year", "weekday")


def _time_mapping(level):
    def convert(day):
        return time_attributes(date.fromisoformat(day))[level]
    return convert


def coarsen(cuboid, dim, level=None, mapping=None):
    """
    Move one grouping dimension to a coarser level and re-aggregate.

    TIME@day can be coarsened to month, year, month_of_year or weekday
    without a mapping; any other dimension needs an explicit value mapping
    (a dict or a function) and a target level name.

    Returns:
        Cuboid whose spec names the new level
    """
    name = _resolve_dim(cuboid, dim)
    ref = DimRef.parse(name)
    if mapping is None:
        if ref.name != "time@day" or level not in _TIME_LEVELS:
            raise QueryError(f"coarsening {ref.name} to {level!r} needs an explicit value mapping")
        mapping = _time_mapping(level)
    if level is None:
        raise QueryError("coarsen needs a target level name")
    target = f"{ref.dimension}@{level}" if ref.dimension else str(level).lower()
    if target in cuboid.group_dims and target != name:
        raise QueryError(f"cuboid already groups by {target}")

    frame = cuboid.frame.copy()
    convert = mapping.get if isinstance(mapping, dict) else mapping
    values = frame[name].map(convert)
    if values.isna().any() and not frame[name].isna().any():
        unmapped = sorted(set(frame.loc[values.isna(), name].astype(str)))[:3]
        raise QueryError(f"value mapping leaves {', '.join(unmapped)} unmapped")
    frame[name] = values
    frame = frame.rename(columns={name: target})

    dims = tuple(target if dim == name else dim for dim in cuboid.spec.dim_names)
    spec = CubeSpec(cuboid.spec.fact, dims, cuboid.spec.measures)
    group_dims = tuple(target if dim == name else dim for dim in cuboid.group_dims)
    group_dims = spec.order(group_dims)
    return Cuboid(spec, group_dims, aggregate(frame, group_dims, spec.accumulators), cuboid.scales)
