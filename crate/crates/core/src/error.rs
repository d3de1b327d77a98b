use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("arity mismatch: expected {expected}, found {found}")]
    ArityMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("normalizing sequence is not positive at n={n} (gamma={value})")]
    NonPositiveGamma { n: u64, value: f64 },

    #[error("normalizing sequence failed regularity certification: {0}")]
    RegularityNotCertified(String),

    #[error("accumulator overflow at n={n}: the normalized statistic is not representable")]
    Overflow { n: u64 },

    #[error("kernel returned a non-finite value at {point:?}")]
    NonFiniteKernel { point: Vec<f64> },

    #[error("{0} requires a closed form the distribution does not provide")]
    MissingClosedForm(&'static str),

    #[error("kernel family has neither a cutoff nor a decay certificate")]
    MissingCutoff,

    #[error("unknown built-in {kind} `{name}`")]
    UnknownBuiltin { kind: &'static str, name: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
