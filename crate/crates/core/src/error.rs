use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-contract input.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Not enough observations for the requested operation.
    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    /// Two objects live on different probability grids.
    #[error("incompatible probability grids ({left} vs {right} points)")]
    IncompatibleGrid { left: usize, right: usize },

    /// Two tangent vectors (or a vector and an eigensystem) have different base points.
    #[error("incompatible base distributions")]
    IncompatibleBase,

    /// A base distribution has ties in its quantile function.
    #[error("base distribution is not atomless: tie at grid index {index}")]
    NotAtomless { index: usize },

    /// `base + vals` is not non-decreasing, so the vector is outside the log image.
    #[error("tangent vector is outside the log image: decrease of {violation:e} at grid index {index}")]
    NotInLogImage { index: usize, violation: f64 },

    /// Quantile values decrease by more than the repair tolerance.
    #[error("quantile values are not non-decreasing: decrease of {violation:e} at grid index {index}")]
    NonMonotone { index: usize, violation: f64 },

    /// A scalar argument lies outside its admissible range.
    #[error("domain error: {0}")]
    Domain(String),

    /// The design has no usable variation (e.g. all predictors identical).
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    /// Paired inputs have different lengths.
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    /// An auto-covariance kernel that should be symmetric is not.
    #[error("kernel is not symmetric (max |K - K^T| = {max_diff:e})")]
    Asymmetric { max_diff: f64 },

    /// More components were requested than the eigensystem holds.
    #[error("requested {requested} components but only {available} are available")]
    TooManyComponents { requested: usize, available: usize },

    /// A linear algebra routine failed.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad files, arguments, or contracts (exit code 2).
    Input,
    /// Degenerate designs and numerical failures (exit code 3).
    Numerical,
}

impl Error {
    /// Stable machine-readable identifier.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::InsufficientData { .. } => "insufficient-data",
            Error::IncompatibleGrid { .. } => "incompatible-grid",
            Error::IncompatibleBase => "incompatible-base",
            Error::NotAtomless { .. } => "atomless-violation",
            Error::NotInLogImage { .. } => "not-in-log-image",
            Error::NonMonotone { .. } => "non-monotone",
            Error::Domain(_) => "domain",
            Error::DegenerateDesign(_) => "degenerate-design",
            Error::LengthMismatch(..) => "length-mismatch",
            Error::Asymmetric { .. } => "asymmetric-kernel",
            Error::TooManyComponents { .. } => "too-many-components",
            Error::Numerical(_) => "numerical",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::DegenerateDesign(_)
            | Error::Numerical(_)
            | Error::NotInLogImage { .. }
            | Error::Asymmetric { .. } => ErrorClass::Numerical,
            _ => ErrorClass::Input,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Input => 2,
            ErrorClass::Numerical => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
