from ncdw.bench.generator import (
    DengueCohort, allocate, generate_dengue_cohort, generate_synthetic, source_frames, write_source_files,
)
from ncdw.bench.harness import BenchCell, BenchCheck, BenchPlan, BenchResult, check_result, run, run_cell
from ncdw.bench.report import checks_frame, emit_report, matrix_frame, read_timings, timings_frame
