import logging
import statistics
import time
from dataclasses import dataclass, field

from ncdw.bench.generator import DEFAULT_DIMENSIONS, DEFAULT_MEMORY_BUDGET_MB, generate_synthetic
from ncdw.core.errors import BenchMismatchError, PlanError
from ncdw.olap.cube import CubeSpec
from ncdw.olap.materialize import Strategy, materialize_cube, prepare_frame

logger = logging.getLogger(__name__)

DEFAULT_ROW_COUNTS = (100_000, 200_000, 500_000, 1_000_000)
DEFAULT_CUBE_SIZES = (3, 4)
BENCH_MEASURES = ("count", "sum(value)", "pct_true(positive)")
STRATEGIES = (Strategy.INDEPENDENT, Strategy.SHARED_SCAN)


@dataclass(frozen=True)
class BenchPlan:
    row_counts: tuple = DEFAULT_ROW_COUNTS
    cube_sizes: tuple = DEFAULT_CUBE_SIZES
    repetitions: int = 3
    seed: int = 0
    warmup: bool = True
    workers: int = 1
    memory_budget_mb: int = DEFAULT_MEMORY_BUDGET_MB

    def __post_init__(self):
        rows = tuple(int(count) for count in self.row_counts)
        sizes = tuple(int(size) for size in self.cube_sizes)
        if not rows or any(count <= 0 for count in rows):
            raise PlanError("row counts must be positive")
        if list(rows) != sorted(set(rows)):
            raise PlanError("row counts must be strictly ascending")
        if not sizes or any(not 1 <= size <= len(DEFAULT_DIMENSIONS) for size in sizes):
            raise PlanError(f"cube sizes must be between 1 and {len(DEFAULT_DIMENSIONS)}")
        if self.repetitions < 1:
            raise PlanError("repetitions must be >= 1")
        object.__setattr__(self, "row_counts", rows)
        object.__setattr__(self, "cube_sizes", sizes)

    @property
    def cells(self):
        return [(rows, size) for size in self.cube_sizes for rows in self.row_counts]


@dataclass
class BenchCell:
    """Timings of one (rows, cube size) combination, seconds per repetition and strategy"""
    rows: int
    cube_size: int
    cuboids: int
    base_cells: int
    equal: bool
    timings: dict = field(default_factory=dict)

    def median(self, strategy):
        return statistics.median(self.timings[Strategy.parse(strategy).value])

    def fastest(self, strategy):
        return min(self.timings[Strategy.parse(strategy).value])

    def slowest(self, strategy):
        return max(self.timings[Strategy.parse(strategy).value])

    @property
    def speedup(self):
        """Median independent time over median shared-scan time"""
        shared = self.median(Strategy.SHARED_SCAN)
        return self.median(Strategy.INDEPENDENT) / shared if shared > 0 else float("inf")


@dataclass(frozen=True)
class BenchCheck:
    """One pass/fail criterion over a whole benchmark run"""
    name: str
    passed: bool
    detail: str


@dataclass
class BenchResult:
    plan: BenchPlan
    cells: list = field(default_factory=list)
    checks: list = field(default_factory=list)

    @property
    def failed_checks(self):
        return [check for check in self.checks if not check.passed]

    def cell(self, rows, cube_size):
        for cell in self.cells:
            if cell.rows == rows and cell.cube_size == cube_size:
                return cell
        raise KeyError((rows, cube_size))


def _spec(cube_size):
    dims = [name for name, _ in DEFAULT_DIMENSIONS[:cube_size]]
    return CubeSpec.build("testresult", dims, BENCH_MEASURES)


def _timed(spec, rows, strategy, workers):
    start = time.perf_counter()
    lattice = materialize_cube(spec, None, strategy, workers=workers, rows=rows)
    return time.perf_counter() - start, lattice


def run_cell(plan, rows, cube_size):
    """
    Time both strategies on one generated table. The lattices of the two
    strategies are compared before any timing is kept.
    """
    table = generate_synthetic(rows, cube_size, seed=plan.seed, memory_budget_mb=plan.memory_budget_mb)
    spec = _spec(cube_size)
    prepared = prepare_frame(spec, table)
    del table

    if plan.warmup:
        for strategy in STRATEGIES:
            materialize_cube(spec, None, strategy, workers=plan.workers, rows=prepared)

    timings = {strategy.value: [] for strategy in STRATEGIES}
    reference = None
    for repetition in range(plan.repetitions):
        for strategy in STRATEGIES:
            elapsed, lattice = _timed(spec, prepared, strategy, plan.workers)
            if len(lattice) != 2 ** cube_size:
                raise BenchMismatchError(f"{strategy.value} built {len(lattice)} cuboids, expected {2 ** cube_size}")
            if reference is None:
                reference = lattice
            elif repetition == 0 and not reference.equals(lattice):
                raise BenchMismatchError(
                    f"strategies disagree at {rows} rows, cube size {cube_size}",
                    diff_sample=reference.diff(lattice),
                )
            timings[strategy.value].append(elapsed)

    cell = BenchCell(
        rows=rows,
        cube_size=cube_size,
        cuboids=len(reference),
        base_cells=len(reference.base),
        equal=True,
        timings=timings,
    )
    logger.info("rows=%d d=%d: independent %.3fs, shared_scan %.3fs, speedup %.2f", rows, cube_size,
                cell.median(Strategy.INDEPENDENT), cell.median(Strategy.SHARED_SCAN), cell.speedup)
    return cell


def check_result(result):
    """
    Judge a finished run. Every lattice pair must have matched, times
    should grow with the row count, and shared_scan must not be slower than
    independent at the largest cell (most rows, biggest cube).

    Returns:
        list of BenchCheck, also stored on the result
    """
    checks = [BenchCheck("strategies_equal", all(cell.equal for cell in result.cells),
                         f"{len(result.cells)} cells compared cell for cell")]
    for size in result.plan.cube_sizes:
        cells = [cell for cell in result.cells if cell.cube_size == size]
        for strategy in STRATEGIES:
            medians = [cell.median(strategy) for cell in cells]
            grows = all(later >= earlier for earlier, later in zip(medians, medians[1:]))
            checks.append(BenchCheck(f"{strategy.value}_grows_with_rows_d{size}", grows,
                                     "medians " + ", ".join(f"{value:.3f}" for value in medians)))
    largest = max(result.cells, key=lambda cell: (cell.rows, cell.cube_size))
    checks.append(BenchCheck("shared_scan_not_slower", largest.speedup >= 1.0,
                             f"speedup {largest.speedup:.2f} at {largest.rows} rows, cube size {largest.cube_size}"))
    for check in checks:
        if not check.passed:
            logger.warning("bench check %s failed: %s", check.name, check.detail)
    result.checks = checks
    return checks


def run(plan):
    """
    Run the benchmark plan.

    Args:
        plan: BenchPlan

    Returns:
        BenchResult, one cell per (rows, cube size)
    """
    result = BenchResult(plan)
    for rows, cube_size in plan.cells:
        result.cells.append(run_cell(plan, rows, cube_size))
    check_result(result)
    return result
