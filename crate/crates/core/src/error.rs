use thiserror::Error;

/// Errors surfaced by the library.
///
/// Numeric failures are first-class: a Gram matrix that cannot be factorized
/// is reported, never silently regularized away.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("numeric error in {context}: {detail}")]
    Numeric { context: String, detail: String },

    #[error("factorization failed at pivot {pivot}: matrix is not positive definite")]
    Fit { pivot: usize },

    #[error("orbit diverged at step {step}")]
    Divergence { step: usize },

    #[error("source series exhausted: needed {needed} samples, had {available}")]
    Length { needed: usize, available: usize },

    #[error("metric error: {0}")]
    Metric(String),

    #[error("training aborted: {skipped} of {total} steps skipped")]
    Training { skipped: usize, total: usize },

    #[error("variant mismatch: model expects {expected} input columns, config implies {actual}")]
    VariantMismatch { expected: usize, actual: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn numeric(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numeric { context: context.into(), detail: detail.into() }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code category: config 2, input/data 3, numeric 4, i/o 5.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Input(_)
            | Error::DimensionMismatch { .. }
            | Error::Length { .. }
            | Error::VariantMismatch { .. } => 3,
            Error::Numeric { .. }
            | Error::Fit { .. }
            | Error::Divergence { .. }
            | Error::Metric(_)
            | Error::Training { .. } => 4,
            Error::Io { .. } => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
