"""
Command-line front end.

Every subcommand maps library errors to exit codes: 0 success, 1 usage,
2 validation, 3 storage. Diagnostics go to stderr; data goes to files or
stdout.
"""
import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from ncdw import __version__
from ncdw.bench.generator import DEFAULT_TOTAL_TESTS, generate_dengue_cohort, write_source_files
from ncdw.bench.harness import DEFAULT_CUBE_SIZES, DEFAULT_ROW_COUNTS, BenchPlan, run
from ncdw.bench.report import emit_report
from ncdw.capacity.estimator import national_load, reference_inputs
from ncdw.core.errors import NcdwError, StorageError, UsageError
from ncdw.datamart.mart import MartSpec, derive_mart, load_codes, open_mart
from ncdw.datamart.outbreak import DEFAULT_BASELINE_WINDOW, DEFAULT_K
from ncdw.datamart.report import build_mart_report, write_mart_report
from ncdw.ingest.staging import STAGING_DIR, StagingStore
from ncdw.ingest.wrapper import SourceWrapper, ingest_sources
from ncdw.linkage.index import INDEX_FILE, LinkageIndex
from ncdw.olap.cube import CubeSpec
from ncdw.olap.materialize import materialize_cube
from ncdw.olap.standard import precompute_standard
from ncdw.pipeline_state import PipelineState
from ncdw.stages.sources_stage import GenerateStage
from ncdw.utils.artifact_manager import ArtifactManager
from ncdw.utils.config import load_capacity_config, load_config, resolve_link_key
from ncdw.utils.log import configure_logging
from ncdw.warehouse.loader import load_batch, load_pending
from ncdw.warehouse.query import scan_frame
from ncdw.warehouse.store import WarehouseStore

logger = logging.getLogger(__name__)

PROG = "ncdw"


class ArgumentParser(argparse.ArgumentParser):
    """argparse parser that reports bad usage as UsageError instead of exiting"""
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text):
    try:
        values = [int(part.replace("_", "")) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return values


def build_parser():
    parser = ArgumentParser(prog=PROG, description="Embeddable clinical data warehouse")
    parser.add_argument("--version", action="version", version=f"{PROG} {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")
    parser.add_argument("--config", type=Path, help="TOML configuration document")
    parser.add_argument("--warehouse", type=Path, help="warehouse root (overrides the configuration)")
    parser.add_argument("--link-key-file", type=Path, help="file holding the hex link key")
    commands = parser.add_subparsers(dest="command", required=True, metavar="command")

    ingest = commands.add_parser("ingest", help="parse, standardize and stage source files")
    ingest.add_argument("--source", required=True, help="configured source id")
    ingest.add_argument("--file", dest="files", action="append", required=True, type=Path,
                        help="source file; repeat for several files")
    ingest.add_argument("--workers", type=int, default=4)

    load = commands.add_parser("load", help="load staged batches into the warehouse")
    which = load.add_mutually_exclusive_group(required=True)
    which.add_argument("--batch", type=int)
    which.add_argument("--pending", action="store_true")

    scan = commands.add_parser("scan", help="print fact rows matching a predicate as TSV")
    scan.add_argument("--fact", default="testresult")
    scan.add_argument("--where", default="")
    scan.add_argument("--columns", help="comma-separated output columns")
    scan.add_argument("--limit", type=int)

    cube = commands.add_parser("cube", help="materialize a cube lattice")
    cube.add_argument("--fact", default="testresult")
    cube.add_argument("--dims", required=True)
    cube.add_argument("--measures", default="count")
    cube.add_argument("--strategy", default="shared_scan", choices=["independent", "shared_scan"])
    cube.add_argument("--workers", type=int, default=1)
    cube.add_argument("--out", type=Path, required=True)

    mart = commands.add_parser("mart", help="derive a disease mart or report on it")
    mart_commands = mart.add_subparsers(dest="mart_command", required=True, metavar="action")
    derive = mart_commands.add_parser("derive")
    derive.add_argument("--name", default="dengue")
    derive.add_argument("--codes", type=Path, help="file of disease codes (default: configured dengue codes)")
    mart_report = mart_commands.add_parser("report")
    mart_report.add_argument("--name", default="dengue")
    mart_report.add_argument("--out", type=Path, required=True)
    mart_report.add_argument("--k", type=float, default=DEFAULT_K)
    mart_report.add_argument("--window", type=int, default=DEFAULT_BASELINE_WINDOW)

    report = commands.add_parser("report", help="write the standard aggregates and table counts")
    report.add_argument("--out", type=Path, required=True)

    estimate = commands.add_parser("estimate", help="national load and storage estimate")
    estimate.add_argument("--config", dest="capacity_config", type=Path,
                          help="capacity inputs (default: the reference deployment)")
    estimate.add_argument("--rounding", choices=["ceiling", "half_up"])
    estimate.add_argument("--out", type=Path, required=True)

    bench = commands.add_parser("bench", help="time cube materialization strategies")
    bench.add_argument("--rows", type=_int_list, default=list(DEFAULT_ROW_COUNTS))
    bench.add_argument("--dims", type=_int_list, default=list(DEFAULT_CUBE_SIZES))
    bench.add_argument("--reps", type=int, default=3)
    bench.add_argument("--seed", type=int, default=42)
    bench.add_argument("--workers", type=int, default=1)
    bench.add_argument("--out", type=Path, required=True)

    generate = commands.add_parser("generate", help="write a synthetic dengue cohort as source files")
    generate.add_argument("--seed", type=int, default=0)
    generate.add_argument("--tests", type=int, default=DEFAULT_TOTAL_TESTS)
    generate.add_argument("--dirty", type=int, default=0, help="malformed rows to include")
    generate.add_argument("--out", type=Path, required=True)

    demo = commands.add_parser("demo", help="run generate, ingest, load, mart, report and estimate")
    demo.add_argument("--seed", type=int, default=0)
    demo.add_argument("--tests", type=int, default=DEFAULT_TOTAL_TESTS)
    demo.add_argument("--out", type=Path, required=True)
    return parser


def _config(args):
    config = load_config(args.config)
    if args.warehouse is not None:
        config = config.model_copy(update={"warehouse_root": args.warehouse})
    return config


def _store(config):
    return WarehouseStore(config.warehouse_root, config.reporting_zone_offset_minutes)


def cmd_ingest(args):
    config = _config(args)
    source = config.source(args.source)
    secret = resolve_link_key(args.link_key_file, config, os.environ)
    staging = StagingStore(config.warehouse_root / STAGING_DIR)
    index = LinkageIndex.load(config.warehouse_root / INDEX_FILE)
    wrapper = SourceWrapper(source.to_descriptor(), secret=secret, index=index)
    reports = ingest_sources([(wrapper, path) for path in args.files], staging, workers=args.workers)
    index.save(config.warehouse_root / INDEX_FILE)
    rejected = 0
    for report in reports:
        print(report.batch_id)
        if report.rejected:
            print(report.summary(), file=sys.stderr)
            rejected += report.rejected
    if rejected:
        print(f"{PROG}: {rejected} row(s) rejected; see the rejects files under {staging.root}", file=sys.stderr)
        return 2
    return 0


def cmd_load(args):
    config = _config(args)
    staging = StagingStore(config.warehouse_root / STAGING_DIR)
    store = _store(config)
    codes = tuple(config.dengue_codes)
    if args.pending:
        reports = load_pending(staging, store, codes)
    else:
        reports = [load_batch(args.batch, staging, store, codes)]
    for report in reports:
        print(report.summary())
    return 0


def cmd_scan(args):
    store = _store(_config(args))
    columns = [column.strip() for column in args.columns.split(",")] if args.columns else None
    rows = scan_frame(store, args.fact, args.where or None, columns)
    if args.limit is not None:
        rows = rows.head(args.limit)
    rows.to_csv(sys.stdout, sep="\t", index=False, na_rep="", lineterminator="\n")
    return 0


def cmd_cube(args):
    store = _store(_config(args))
    spec = CubeSpec.build(args.fact, args.dims, args.measures)
    lattice = materialize_cube(spec, store, args.strategy, workers=args.workers)
    lattice.export(args.out)
    print(args.out / "lattice.json")
    return 0


def cmd_mart(args):
    config = _config(args)
    if args.mart_command == "derive":
        codes = load_codes(args.codes) if args.codes else frozenset(config.dengue_codes)
        mart = derive_mart(MartSpec(args.name, codes), _store(config))
        print(mart.root)
        return 0
    mart = open_mart(config.warehouse_root, args.name)
    report = build_mart_report(mart, name=args.name, k=args.k, baseline_window=args.window)
    artifacts = write_mart_report(report, args.out)
    for path in artifacts.written.values():
        print(path)
    return 0


def cmd_report(args):
    store = _store(_config(args))
    artifacts = ArtifactManager(args.out)
    for name, frame in precompute_standard(store).items():
        artifacts.register(name, f"{name}.tsv")
        artifacts.write_frame(name, frame, sep="\t", float_format=None)
    counts = [f"{name}\t{count}\n" for name, count in store.dimension_row_counts().items()]
    counts += [f"fact_{name}\t{len(store.fact(name))}\n" for name in ("testresult", "ambient")]
    artifacts.register("table_counts", "table_counts.tsv")
    artifacts.write("table_counts", "table\trows\n" + "".join(counts))
    for path in artifacts.written.values():
        print(path)
    return 0


def cmd_estimate(args):
    inputs = load_capacity_config(args.capacity_config) if args.capacity_config else reference_inputs()
    if args.rounding:
        inputs = replace(inputs, rounding=args.rounding)
    report = national_load(inputs)
    report.write_csv(args.out)
    print(f"{report.daily_total} records/day")
    return 0


def cmd_bench(args):
    plan = BenchPlan(row_counts=tuple(args.rows), cube_sizes=tuple(args.dims), repetitions=args.reps,
                     seed=args.seed, workers=args.workers)
    result = run(plan)
    artifacts = emit_report(result, args.out)
    for path in artifacts.written.values():
        print(path)
    # timing checks are reported, not fatal
    for check in result.failed_checks:
        print(f"{PROG}: bench check {check.name} failed: {check.detail}", file=sys.stderr)
    return 0


def cmd_generate(args):
    cohort = generate_dengue_cohort(seed=args.seed, total_tests=args.tests, dirty_rows=args.dirty)
    paths = write_source_files(cohort, args.out)
    print(paths["config"])
    return 0


def pipeline_demo(seed=0, out_dir="demo", total_tests=DEFAULT_TOTAL_TESTS):
    """
    End to end run on generated data: generate, ingest, load, derive the
    dengue mart, write its report and the capacity estimate. Everything
    lands under out_dir, with a CHECKSUMS file over the report artifacts.

    Returns:
        PipelineState of the finished run
    """
    out_dir = Path(out_dir)
    if out_dir.exists() and any(out_dir.iterdir()):
        raise UsageError(f"demo output folder {out_dir} is not empty")
    pipeline = PipelineState(out_dir, seed=seed, total_tests=total_tests)
    pipeline.run(GenerateStage(pipeline))
    pipeline.artifacts.register("summary", "summary.txt")
    pipeline.artifacts.write("summary", "\n".join(pipeline.summary) + "\n")
    pipeline.artifacts.write_checksums()
    return pipeline


def cmd_demo(args):
    pipeline = pipeline_demo(args.seed, args.out, args.tests)
    for line in pipeline.summary:
        print(line)
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "load": cmd_load,
    "scan": cmd_scan,
    "cube": cmd_cube,
    "mart": cmd_mart,
    "report": cmd_report,
    "estimate": cmd_estimate,
    "bench": cmd_bench,
    "generate": cmd_generate,
    "demo": cmd_demo,
}


def dispatch(argv=None):
    """
    Run one command line.

    Returns:
        int: process exit code
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return e.exit_code
    except SystemExit as e:
        # --help and --version
        return int(e.code or 0)

    configure_logging(args.verbose)
    try:
        return COMMANDS[args.command](args)
    except NcdwError as e:
        print(f"{PROG}: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"{PROG}: {e}", file=sys.stderr)
        return StorageError.exit_code


def main():
    sys.exit(dispatch())
