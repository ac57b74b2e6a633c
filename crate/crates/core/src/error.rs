use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse error classes, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Solver,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("duplicate row for unit {unit} in year {year}")]
    DuplicateKey { unit: String, year: i32 },

    #[error("line {line}: column `{column}` holds non-numeric value `{value}`")]
    NonNumeric {
        line: u64,
        column: String,
        value: String,
    },

    #[error("line {line}: year `{value}` is not an integer")]
    BadYear { line: u64, value: String },

    #[error("unknown series `{0}`")]
    UnknownSeries(String),

    #[error("unknown unit `{0}`")]
    UnknownUnit(String),

    #[error("year {0} is not covered by the dataset")]
    UnknownYear(i32),

    #[error("zero denominator in `{series}` for {unit} {year}")]
    ZeroDenominator {
        series: String,
        unit: String,
        year: i32,
    },

    #[error("treated unit {unit} has no value for {year}")]
    TreatedMissing { unit: String, year: i32 },

    #[error("no donors remain after applying the missing-data policy")]
    NoDonors,

    #[error("solver: {0}")]
    Solver(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) | Error::UnknownUnit(_) | Error::UnknownYear(_) => {
                ErrorCategory::Config
            }
            Error::Data(_)
            | Error::DuplicateKey { .. }
            | Error::NonNumeric { .. }
            | Error::BadYear { .. }
            | Error::UnknownSeries(_)
            | Error::ZeroDenominator { .. }
            | Error::TreatedMissing { .. }
            | Error::NoDonors
            | Error::Csv(_) => ErrorCategory::Data,
            Error::Solver(_) => ErrorCategory::Solver,
            Error::Io(_) => ErrorCategory::Io,
        }
    }
}
