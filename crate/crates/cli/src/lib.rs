//! Trace ingestion, synthetic trace generation and experiment sweeps on top
//! of `esp-core`.

pub mod error;
pub mod experiment;
pub mod generate;
pub mod io;

pub use error::CliError;
pub use experiment::{
    run_experiment_on,
    parse_algorithm,
    emit_plot_data, run_experiment, Axis, ExperimentConfig, Normalization, PlotKind, ResultRow,
    ResultTable, StorageConfig, TraceSource,
};
pub use generate::{generate_trace, SyntheticTraceParams};
pub use io::{ingest_csv, parse_csv, write_csv, CSV_HEADER};
