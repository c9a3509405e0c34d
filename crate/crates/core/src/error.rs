use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied parameter violates its documented range.
    #[error("invalid {field}: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    /// A closed form is evaluated outside the region where it is defined.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unknown operator kind `{0}`")]
    UnknownOperator(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// The Fock cutoff cannot hold the requested state or dynamics.
    #[error("cutoff {cutoff} too small: {detail}")]
    CutoffTooSmall { cutoff: usize, detail: String },

    #[error("eigensolver failed to converge (dim {dim}, max |H_ij| = {max_abs:e})")]
    EigenNoConvergence { dim: usize, max_abs: f64 },

    /// Matrix handed to the symmetric eigensolver is not symmetric.
    #[error("matrix is not symmetric (max |H - H^T| = {0:e})")]
    NotSymmetric(f64),

    #[error("time window [{t_start}, {t_end}] not covered by series [{series_start}, {series_end}]")]
    WindowOutOfRange { t_start: f64, t_end: f64, series_start: f64, series_end: f64 },

    #[error("fit failed: {0}")]
    Fit(String),

    /// Conserved quantities drifted beyond tolerance even after refining the step.
    #[error("integration drift too large after {halvings} step halvings: {detail}")]
    StepSize { halvings: u32, detail: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { field, reason: reason.into() }
    }

    /// True for errors caused by bad input rather than a numerical failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. }
                | Error::Domain(_)
                | Error::UnknownOperator(_)
                | Error::DimensionMismatch { .. }
                | Error::WindowOutOfRange { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
