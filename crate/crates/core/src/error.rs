use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("zero signal variance")]
    ZeroSignalVariance,

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("subsample size {n_sub} exceeds the {available} available rows")]
    SubsampleTooLarge { n_sub: usize, available: usize },

    /// The reduced design cannot identify its coefficients: either it has at
    /// least as many columns as rows or it is rank deficient.
    #[error("underdetermined: {support} predictors on {rows} rows")]
    Underdetermined { support: usize, rows: usize },

    #[error("no fittable candidate")]
    NoFittableCandidate,

    #[error("empty frequency support: no variable was selected on any subsample")]
    EmptyFrequencySupport,

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("meta-stable set has {size} variables, exhaustive search is capped at {cap}; lower q0")]
    MetaStableTooLarge { size: usize, cap: usize },

    #[error("data error at line {line}: {msg}")]
    Data { line: usize, msg: String },

    #[error("response column {0:?} not found")]
    MissingColumn(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Grid(_) | Error::MetaStableTooLarge { .. } | Error::Json(_) => 1,
            Error::Data { .. }
            | Error::MissingColumn(_)
            | Error::Csv(_)
            | Error::SizeMismatch(_)
            | Error::ZeroSignalVariance => 2,
            _ => 3,
        }
    }
}
