//! Error type shared by all modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A Fock index is outside the truncated basis.
    #[error("Fock index {index} out of range for dimension {dim}")]
    Dimension { index: usize, dim: usize },

    /// A state does not fit in the requested truncation; `required_dim` is
    /// the smallest dimension that would satisfy the tail tolerance.
    #[error("truncation too small: dim {dim} leaves tail mass above tolerance, need at least {required_dim}")]
    Truncation { dim: usize, required_dim: usize },

    /// Two objects that must share a dimension do not.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Operation not defined for this coupling model.
    #[error("unsupported coupling model for {operation}: {model}")]
    UnsupportedModel {
        operation: &'static str,
        model: &'static str,
    },

    /// A numerical result failed its accuracy budget.
    #[error("accuracy failure in {context}: estimated error {estimate:.3e} exceeds budget {budget:.3e}")]
    Accuracy {
        context: &'static str,
        estimate: f64,
        budget: f64,
    },

    /// The adaptive integrator could not continue.
    #[error("integrator failure at t = {t:.6e} (step {step:.3e}): {detail}")]
    Integrator { t: f64, step: f64, detail: String },

    /// Observable undefined for this state (for example `g2(0)` of vacuum).
    #[error("undefined observable: {what}")]
    UndefinedObservable { what: &'static str },

    /// The diagonal fast path was asked to handle a driven evolution.
    #[error("diagonal evolution requires drive = none")]
    DriveUnsupported,

    /// Invalid configuration (failed precondition on user input).
    #[error("configuration error: {0}")]
    Config(String),

    /// A Fock-order computation needs a nonzero Kerr coefficient.
    #[error("no BIC order: beta = 0 gives no photon-number dependence")]
    NoBicOrder,

    /// Two spectra cover different energy ranges.
    #[error("mismatched spectra: k ranges {a} and {b}")]
    MismatchedRanges { a: usize, b: usize },

    /// Malformed tabulated-coupling file.
    #[error("parse error in {path} line {line}: {detail}")]
    Parse {
        path: String,
        line: usize,
        detail: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
