"""Benchmark harness: experiment specs, CSV traces, plot data and property suites."""

from .experiment import (
    ExperimentSpec,
    SpecError,
    aggregate_from_traces,
    aggregate_summary,
    emit_plot_data,
    estimate_fstar,
    make_instance,
    parse_seeds,
    read_csv,
    render_table,
    run_experiment,
    start_point,
)

__all__ = [
    "ExperimentSpec", "SpecError", "aggregate_from_traces", "aggregate_summary",
    "emit_plot_data", "estimate_fstar", "make_instance", "parse_seeds", "read_csv",
    "render_table", "run_experiment", "start_point",
]
