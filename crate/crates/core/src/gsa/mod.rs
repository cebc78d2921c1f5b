//! Attribution of model scores to structural features.
//!
//! [`correlate`] runs Pearson/Spearman over experiment records. [`run_morris`]
//! and [`run_sobol`] are global sensitivity methods over any [`Surface`]: a
//! callable model of F1 over the six-dimensional feature space, either a k-NN
//! surrogate fitted to records or an external command.

mod correlate;
mod morris;
mod records;
mod sobol;
mod surface;

use thiserror::Error;

pub use correlate::{correlate, correlate_all, correlate_series, pearson, ranks, spearman, Correlation};
pub use morris::{run_morris, MorrisConfig, MorrisIndex, MorrisResult};
pub use records::{read_records, read_records_csv, read_records_jsonl, write_records_csv, ExperimentRecord};
pub use sobol::{run_sobol, SobolConfig, SobolIndex, SobolResult};
pub use surface::{
    evaluate_batch, fit_knn_surrogate, record_bounds, Bounds, ExternalCommand, FnSurface, KnnSurrogate,
    ResponseSurface, Surface, SurfaceKind,
};

#[derive(Debug, Error)]
pub enum GsaError {
    #[error("need at least {needed} records, got {got}")]
    InsufficientRecords { needed: usize, got: usize },
    #[error("{0} is constant; correlation is undefined")]
    Degenerate(String),
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("response surface is flat (output variance {0:e})")]
    Flat(f64),
    #[error("surface evaluation failed at {point:?}: {message}")]
    Evaluation { point: Vec<f64>, message: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("records: {0}")]
    Records(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
