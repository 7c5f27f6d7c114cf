use std::path::PathBuf;

use thiserror::Error;

/// Rejected model parameters or mass-function arguments.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("parameter {name} is not finite ({value})")]
    NonFinite { name: &'static str, value: f64 },
    #[error("probability {name} = {value} outside [0, 1]")]
    ProbabilityRange { name: &'static str, value: f64 },
    #[error("mixing proportions sum to {sum}, expected 1")]
    ProportionSum { sum: f64 },
    #[error("mean m = {0} must be non-negative")]
    NegativeMean(f64),
    #[error("dispersion d = {0} must be at least 1")]
    Dispersion(f64),
    #[error("constant-one limit m = 0 requires d = 1 (got d = {0})")]
    ConstantOneDispersion(f64),
    #[error("geometric mean mu_g = {0} must be non-negative")]
    NegativeGeomMean(f64),
    #[error("x_tilde = {0} is below 1, impossible for positive counts")]
    WeightedMeanBelowOne(f64),
    #[error("parameters violate the {submodel} restrictions: {detail}")]
    Restriction { submodel: &'static str, detail: String },
}

/// Errors from reading count matrices.
#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed header: {msg}")]
    Header { line: u64, msg: String },
    #[error("line {line} (byte {offset}): negative entry {value:?} at gene {gene}, cell {cell}")]
    Negative { line: u64, offset: u64, gene: usize, cell: usize, value: String },
    #[error("line {line} (byte {offset}): non-integer entry {value:?} at gene {gene}, cell {cell}")]
    NonInteger { line: u64, offset: u64, gene: usize, cell: usize, value: String },
    #[error("line {line} (byte {offset}): {msg}")]
    Dimension { line: u64, offset: u64, msg: String },
    #[error("line {line} (byte {offset}): malformed entry: {msg}")]
    Malformed { line: u64, offset: u64, msg: String },
    #[error("{0}")]
    Csv(#[from] csv::Error),
}

/// Errors from the synthetic data generators.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("params table entry {index}: {source}")]
    InvalidParams {
        index: usize,
        #[source]
        source: ParamError,
    },
    #[error("simulation recipe mismatch: {0}")]
    Spec(String),
}
