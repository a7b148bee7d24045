use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong between reading a scenario and printing bands.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is missing, malformed or out of range.
    #[error("invalid {field}: {message}")]
    Invalid { field: String, message: String },

    #[error("unknown technology_node '{0}' (not in the active node table)")]
    UnknownNode(String),

    /// A multiplier formula produced a value outside (0, inf).
    #[error("{lever} multiplier must be positive, got {value}")]
    NonPositiveMultiplier { lever: &'static str, value: f64 },

    /// The admissible region has (close to) zero prior mass.
    #[error(
        "prior-constraint conflict: no admissible draw in {attempts} attempts \
         (acceptance estimate {acceptance:.3e}, most violated: {most_violated})"
    )]
    PriorConstraintConflict {
        attempts: u64,
        acceptance: f64,
        most_violated: String,
    },

    #[error(
        "empty configuration class '{class}': no matching deal in {attempts} attempts \
         (hit rate estimate {hit_rate:.3e})"
    )]
    EmptyConfigurationClass {
        class: String,
        attempts: u64,
        hit_rate: f64,
    },

    /// Evaluating the price model left `(0, inf)`.
    #[error("price overflow/underflow (alpha={alpha}, beta={beta:?}, sigma={sigma}, eta={eta})")]
    PriceOutOfRange {
        alpha: f64,
        beta: [f64; 5],
        sigma: f64,
        eta: f64,
    },

    #[error("non-finite price in world {world} (alpha={alpha}, beta={beta:?}, sigma={sigma})")]
    NonFinitePrice {
        world: usize,
        alpha: f64,
        beta: [f64; 5],
        sigma: f64,
    },

    #[error("semi-analytic median refused: {0}")]
    MaterialTruncation(String),

    #[error("empty sample set")]
    EmptySamples,

    #[error("need at least {required} observed deals, got {got}")]
    TooFewDeals { required: usize, got: usize },

    #[error("design matrix is rank deficient (condition {condition:.3e}); collinear levers: {levers}")]
    RankDeficient { condition: f64, levers: String },

    #[error("year {0} is not in the anchor dataset")]
    MissingYear(i32),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

/// Coarse failure class, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Sampling,
    Io,
}

impl Error {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::PriorConstraintConflict { .. }
            | Error::EmptyConfigurationClass { .. }
            | Error::NonFinitePrice { .. }
            | Error::PriceOutOfRange { .. } => ErrorKind::Sampling,
            Error::Io { .. } => ErrorKind::Io,
            _ => ErrorKind::Validation,
        }
    }

    pub fn io(path: &std::path::Path, err: &std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}

impl From<toml::de::Error> for Error {
    fn from(err: toml::de::Error) -> Self {
        Error::Parse(err.to_string())
    }
}
