from .cli import build_parser, main
from .harness import (
    CSV_COLUMNS,
    BenchRecord,
    UsageError,
    measure_cost_ratio,
    parse_lowfi,
    read_records,
    records_csv,
    run_solver,
    run_suite,
    summarize,
)

__all__ = [
    "CSV_COLUMNS",
    "BenchRecord",
    "UsageError",
    "build_parser",
    "main",
    "measure_cost_ratio",
    "parse_lowfi",
    "read_records",
    "records_csv",
    "run_solver",
    "run_suite",
    "summarize",
]
