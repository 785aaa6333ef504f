import logging
from concurrent.futures import ThreadPoolExecutor
from enum import Enum

import pandas as pd

from ncdw.core.errors import SpecError
from ncdw.olap.cube import COUNT, CubeLattice, Cuboid, aggregate, lattice_order, n_column, sum_column, to_exact

logger = logging.getLogger(__name__)


class Strategy(str, Enum):
    INDEPENDENT = "independent"
    SHARED_SCAN = "shared_scan"

    @classmethod
    def parse(cls, value):
        try:
            return cls(str(value).strip().lower().replace("-", "_"))
        except ValueError:
            raise SpecError(f"unknown strategy {value!r}; expected independent or shared_scan") from None


def prepare_frame(spec, source):
    """
    Row-level frame the cube is built from: one column per cube dimension
    (named by its canonical reference) plus the accumulator columns.

    Args:
        spec: CubeSpec
        source: WarehouseStore (its joined fact table is used) or a DataFrame

    Returns:
        DataFrame; `attrs["scales"]` maps each measured column to the
        scale of its sum accumulator (see to_exact)
    """
    if isinstance(source, pd.DataFrame):
        table = source
    else:
        spec.validate_fact()
        table = source.wide_frame(spec.fact)

    missing = [str(dim) for dim in spec.dims if dim.column not in table.columns]
    if missing:
        raise SpecError(f"cube dimension(s) not available on {spec.fact}: {', '.join(missing)}")
    rows = pd.DataFrame({dim.name: table[dim.column].to_numpy() for dim in spec.dims})
    rows[COUNT] = 1
    rows[COUNT] = rows[COUNT].astype("int64")
    scales = {}
    for column in spec.measured_columns:
        if column not in table.columns:
            raise SpecError(f"unknown measure column '{column}' on {spec.fact}")
        series = table[column]
        if not (pd.api.types.is_numeric_dtype(series) or pd.api.types.is_bool_dtype(series)):
            raise SpecError(f"measure column '{column}' is not numeric")
        rows[sum_column(column)], rows[n_column(column)], scales[column] = to_exact(series)
    rows.attrs["scales"] = scales
    return rows


def _map(fn, items, workers):
    if workers and workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _independent(spec, rows, workers):
    accumulators = spec.accumulators
    keys = lattice_order(spec)
    frames = _map(lambda key: aggregate(rows, key, accumulators), keys, workers)
    return dict(zip(keys, frames))


def _shared_scan(spec, rows, workers):
    """Scan rows once for the base cuboid, then derive each level from the smallest parent"""
    accumulators = spec.accumulators
    base_key = spec.dim_names
    frames = {base_key: aggregate(rows, base_key, accumulators)}
    for size in range(len(base_key) - 1, -1, -1):
        level = [key for key in lattice_order(spec) if len(key) == size]
        parents = [key for key in lattice_order(spec) if len(key) == size + 1]

        def derive(key):
            candidates = [parent for parent in parents if set(key) <= set(parent)]
            parent = min(candidates, key=lambda candidate: len(frames[candidate]))
            logger.debug("deriving (%s) from (%s)", ", ".join(key) or "apex", ", ".join(parent))
            return aggregate(frames[parent], key, accumulators)

        frames.update(zip(level, _map(derive, level, workers)))
    return frames


def materialize_cube(spec, store, strategy=Strategy.SHARED_SCAN, workers=1, rows=None):
    """
    Build all 2^d cuboids of a cube.

    Args:
        spec: CubeSpec
        store: WarehouseStore or DataFrame holding the fact rows
        strategy: `independent` re-aggregates the rows for every cuboid;
            `shared_scan` aggregates the rows once and derives the rest
        workers: threads used per lattice level (1 = sequential)
        rows: frame already returned by prepare_frame, to skip preparation

    Returns:
        CubeLattice
    """
    strategy = Strategy.parse(strategy.value if isinstance(strategy, Strategy) else strategy)
    if rows is None:
        rows = prepare_frame(spec, store)
    if strategy is Strategy.INDEPENDENT:
        frames = _independent(spec, rows, workers)
    else:
        frames = _shared_scan(spec, rows, workers)
    scales = rows.attrs.get("scales", {})
    cuboids = {key: Cuboid(spec, key, frame, scales) for key, frame in frames.items()}
    logger.info("materialized %d cuboids over %d rows (%s)", len(cuboids), len(rows), strategy.value)
    return CubeLattice(spec, cuboids, strategy.value)
