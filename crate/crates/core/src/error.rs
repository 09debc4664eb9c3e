use thiserror::Error;

/// Errors produced by the placement library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid popularity distribution: {0}")]
    InvalidDistribution(String),

    #[error("binomial coefficient C({n}, {r}) overflows u64")]
    Overflow { n: i64, r: i64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("infeasible candidate: {0}")]
    InfeasibleCase(String),

    #[error("file size {f} bits does not make every subfile integral; smallest valid size is {min_f} bits")]
    InvalidFileSize { f: u64, min_f: u64 },

    #[error("decoding for user {user} failed: {reason}")]
    Corruption { user: usize, reason: String },

    #[error("simplex exceeded {iterations} iterations")]
    SolverStalled { iterations: usize },

    #[error("instance with {variables} LP variables exceeds the oracle guard of {limit}")]
    InstanceTooLarge { variables: usize, limit: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
