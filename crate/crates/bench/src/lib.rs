//! Benchmark harness for the cooperative solvers: seeded sweeps over
//! dimensions, tolerances and algorithms, paired aggregation against CG,
//! power-law and per-multiplication timing fits, and CSV/JSON outputs.

// `!(x >= lo)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregate;
pub mod config;
pub mod error;
pub mod fit;
pub mod output;
pub mod sweep;

pub use aggregate::{aggregate, tolerance_sweep, tolerance_table, Aggregate, CellSummary, ToleranceTable};
pub use config::ExperimentConfig;
pub use error::{BenchError, Result};
pub use fit::{fit_loglog, fit_metric, fit_parabola_and_mult_time, FitResult, Metric, ParabolaFit};
pub use output::{read_records, write_outputs, write_records, Summary};
pub use sweep::{run_sweep, ExperimentRecord, MAX_THREADS_ENV};
