use thiserror::Error;

/// Errors produced by the fitting, inference and data layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("optimizer did not converge after {iterations} iterations (gradient norm {gradient_norm:.3e})")]
    NonConvergence {
        iterations: usize,
        gradient_norm: f64,
        /// Best point reached, including the objective trace.
        partial: Box<crate::estimation::FitResult>,
    },

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("singular matrix: {what} (condition number {condition:.3e})")]
    SingularMatrix { what: String, condition: f64 },

    #[error("rescaling factor undefined: score norm {norm:.3e} at the null value")]
    UndefinedRescaling { norm: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown column `{column}`; available columns: {}", available.join(", "))]
    UnknownColumn { column: String, available: Vec<String> },

    #[error("unknown region `{region}`; available regions: {}", available.join(", "))]
    UnknownRegion { region: String, available: Vec<String> },

    #[error("series kind mismatch: expected {expected}, found {found}")]
    KindMismatch { expected: String, found: String },

    #[error("date gap between {before} and {after} (use --allow-gaps to reindex by calendar day)")]
    DateGap { before: String, after: String },

    #[error("too many failed replicates in regime {regime}: {excluded} of {reps}")]
    ExcessiveExclusions {
        regime: String,
        excluded: usize,
        reps: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag, used by the CLI's error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::DegenerateData(_) => "degenerate_data",
            Error::NonConvergence { .. } => "non_convergence",
            Error::SingularDesign(_) => "singular_design",
            Error::SingularMatrix { .. } => "singular_matrix",
            Error::UndefinedRescaling { .. } => "undefined_rescaling",
            Error::Parse { .. } => "parse",
            Error::UnknownColumn { .. } => "unknown_column",
            Error::UnknownRegion { .. } => "unknown_region",
            Error::KindMismatch { .. } => "kind_mismatch",
            Error::DateGap { .. } => "date_gap",
            Error::ExcessiveExclusions { .. } => "excessive_exclusions",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
