//! Data loading, seeded initialization, experiments and reporting.

mod check;
mod curves;
mod experiment;
mod io;
mod synth;

pub use check::{brute_force_objective, nnls_check, CheckReport};
pub use curves::{
    curve_time_to, error_at, median_time, min_error, normalized, normalized_curves, time_grid, trace_time_to,
    CurvePoint, NormalizedCurves,
};
pub use experiment::{
    run_experiment, run_experiment_on, ConfigSummary, DatasetSource, ExperimentSpec, ExperimentSummary,
    LabeledConfig, RhoMode, RunFailure, REPORT_THRESHOLDS,
};
pub use io::{
    load_matrix, parse_dense_csv, parse_matrix_market, parse_raw, read_trace_csv, write_curve_csv,
    write_dense_csv, write_matrix_market, write_raw, write_summary, write_trace_csv, MatrixFormat, CURVE_HEADER,
    TRACE_HEADER,
};
pub use synth::{init_factors, synth_matrix, SynthKind, SynthSpec};
