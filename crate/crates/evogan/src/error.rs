//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong across the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("path does not exist: {0}")]
    MissingPath(PathBuf),

    #[error("no decodable images found under {0}")]
    EmptyDataset(PathBuf),

    #[error("failed to decode image {path}: {reason}")]
    ImageDecode { path: PathBuf, reason: String },

    #[error("index {index} out of range for dataset of {len} samples")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("pixel value outside [-1, 1]: {value}")]
    PixelOutOfRange { value: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown config key `{key}`; valid keys: {valid}")]
    UnknownConfigKey { key: String, valid: String },

    #[error("chromosome length mismatch: {a} vs {b}")]
    ChromosomeLength { a: usize, b: usize },

    #[error("population is empty")]
    EmptyPopulation,

    #[error("fitness not evaluated for individual {0}")]
    FitnessUnset(usize),

    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },

    #[error("dimension mismatch between statistics: {a} vs {b}")]
    DimMismatch { a: usize, b: usize },

    #[error("matrix square root did not converge: {0}")]
    NonConvergentSqrt(String),

    #[error("FID series too short: {len} points for window {window}")]
    SeriesTooShort { len: usize, window: usize },

    #[error(
        "embedder weights unavailable: {path} not found.\n{instructions}"
    )]
    EmbedderWeightsUnavailable { path: PathBuf, instructions: String },

    #[error("embedder error: {0}")]
    Embedder(String),

    #[error(
        "non-finite loss at epoch {epoch} (d_loss={d_loss}, g_loss={g_loss}); parameter norms: {norms}"
    )]
    NonFiniteLoss {
        epoch: u64,
        d_loss: f64,
        g_loss: f64,
        norms: String,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("metrics schema mismatch in {path}: {reason}")]
    MetricsSchema { path: PathBuf, reason: String },

    #[error("comparison configs disagree on {field}: {values}")]
    CompareMismatch { field: String, values: String },

    #[error("plot error: {0}")]
    Plot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
