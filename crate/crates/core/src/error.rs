use thiserror::Error;

/// Errors produced anywhere in the crate.
///
/// Variants are grouped so the command layer can map them onto exit codes:
/// input/data problems, numerical degeneracies, and invalid configuration.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("schema error: missing column '{0}'")]
    MissingColumn(String),

    #[error("parse error at data row {row}, column '{column}': '{cell}' is not a number")]
    Parse {
        row: usize,
        column: String,
        cell: String,
    },

    #[error("need >= 2 samples to infer a sample rate, got {0}")]
    TooFewSamples(usize),

    #[error("non-uniform sampling: relative jitter {jitter:.3} exceeds 1% (row {row})")]
    NonUniformSampling { jitter: f64, row: usize },

    #[error("time column must be strictly increasing (row {0})")]
    NonIncreasingTime(usize),

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("empty histogram: all {0} values fall outside the domain")]
    EmptyHistogram(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("filter design error: {0}")]
    Design(String),

    #[error("sample rate mismatch: filter designed for {expected} Hz, series is {actual} Hz")]
    RateMismatch { expected: f64, actual: f64 },

    #[error("series too short: need more than {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("no defined indicator values")]
    NoDefinedValues,

    #[error("degenerate rank variance: both '{a}' and '{b}' have zero placement variance")]
    DegenerateVariance { a: String, b: String },

    #[error("group '{label}' has {got} values, need at least {needed}")]
    GroupTooSmall {
        label: String,
        got: usize,
        needed: usize,
    },

    #[error("non-square matrix {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },

    #[error("zero denominator polynomial")]
    ZeroDenominator,

    #[error("improper transfer function: numerator degree {num} > denominator degree {den}")]
    Improper { num: usize, den: usize },

    #[error("ill-posed loop: {0}")]
    IllPosed(String),

    #[error("domain error: {0}")]
    Domain(String),
}

impl Error {
    /// True for errors caused by numerical degeneracy rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::DegenerateVariance { .. }
                | Error::NoDefinedValues
                | Error::IllPosed(_)
                | Error::ZeroDenominator
                | Error::Domain(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
