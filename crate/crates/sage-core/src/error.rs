//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by dataset ingestion, model training and scoring.
#[derive(Debug, Error)]
pub enum SageError {
    // dataset ingestion
    #[error("bad IDX magic: expected type code 0x08, got 0x{0:02x}")]
    BadMagic(u8),
    #[error("truncated IDX file: header declares {expected} payload bytes, found {found}")]
    TruncatedFile { expected: usize, found: usize },
    #[error("IDX dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("CSV row {row}: expected 9 fields, got {got}")]
    RowArity { row: usize, got: usize },
    #[error("CSV row {row}, field {field}: cannot parse {value:?} as a number")]
    NonNumeric {
        row: usize,
        field: usize,
        value: String,
    },
    #[error("CSV row {row}: unknown sex code {code:?} (expected I, M or F)")]
    UnknownSexCode { row: usize, code: String },
    #[error("class {class} has {available} samples, {requested} requested")]
    InsufficientSamples {
        class: usize,
        available: usize,
        requested: usize,
    },

    // transforms
    #[error("transform kind {kind} cannot be applied to {target} data")]
    BadKind { kind: String, target: String },
    #[error("gaussian blur kernel must be odd, got {0}")]
    EvenKernel(usize),
    #[error("cannot drop {requested} of {available} feature columns")]
    DropTooMany { requested: usize, available: usize },

    // neural core
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite input at position {0}")]
    NonFiniteInput(usize),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    DivergenceDetected { epoch: usize, batch: usize },
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),

    // calibration
    #[error("temperature scaling requires a classification model")]
    NotClassification,
    #[error("this operation requires a regression model")]
    NotRegression,

    // latent index
    #[error("cannot build a ball tree from an empty point set")]
    EmptyInput,
    #[error("non-finite coordinate in point {0}")]
    NonFinite(usize),
    #[error("k = {k} outside the valid range 1..={n} for this point set")]
    KTooLarge { k: usize, n: usize },

    // scoring / evaluation
    #[error("score reference requires a non-empty training set")]
    EmptyTrain,
    #[error("precision-recall sweep needs at least one positive label")]
    DegenerateLabels,

    // serialization
    #[error("artifact format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SageError>;
