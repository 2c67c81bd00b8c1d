use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("negative entry in {0}")]
    NegativeEntry(String),

    #[error("{what} sum {sum} exceeds tolerance")]
    SumTolerance { what: String, sum: f64 },

    #[error("non-finite entry in {0}")]
    NonFinite(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("generator arity {expected} does not match {found} distributions")]
    Arity { expected: usize, found: usize },

    #[error("generator `{0}` has no recession function but the base distribution has zeros where others are positive")]
    MissingRecession(String),

    #[error("unknown kind `{0}`")]
    UnknownKind(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("alphabet size {0} exceeds the exhaustive enumeration guard of 12")]
    EnumerationGuard(usize),

    #[error("loss is not bounded below")]
    UnboundedLoss,

    #[error("empty sample")]
    EmptySample,

    #[error("refused: {0} (override with force)")]
    Refused(String),
}

pub type Result<T> = std::result::Result<T, Error>;
