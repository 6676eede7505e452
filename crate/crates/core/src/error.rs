use thiserror::Error;

/// Errors raised by the identification pipeline and its supporting operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("horizon {horizon} is too small: need at least {required} samples (K * N_d)")]
    HorizonTooSmall { horizon: usize, required: usize },

    #[error("submodel {submodel} receives {count} samples, fewer than N_d = {n_d}")]
    InsufficientSamples {
        submodel: usize,
        count: usize,
        n_d: usize,
    },

    #[error("input sample {index} lies outside the partition domain")]
    InputOutsideDomain { index: usize },

    #[error("rank {rank} exceeds the data dimensions {rows}x{cols}")]
    RankTooLarge { rank: usize, rows: usize, cols: usize },

    #[error("matrix is ill conditioned (condition number {condition:.3e}, limit {limit:.1e}): {context}")]
    IllConditioned {
        context: String,
        condition: f64,
        limit: f64,
    },

    #[error("unidentifiable submodel block for cluster {cluster}: {reason}")]
    Unidentifiable { cluster: usize, reason: String },

    #[error("eigen/singular value solver did not converge: {0}")]
    NoConvergence(String),

    #[error("k-means left cluster {cluster} empty after {retries} repairs")]
    EmptyCluster { cluster: usize, retries: usize },

    #[error("ground truth is required but the dataset carries none")]
    MissingTruth,

    #[error("the Cramér-Rao bound with zero output noise is a constrained problem and is out of scope")]
    ConstrainedCrbOutOfScope,

    #[error("non-positive noise variance solves the SNR equation for {target_db} dB")]
    NonPositiveVariance { target_db: f64 },

    #[error("{file}: line {line}, field `{field}`: {message}")]
    Parse {
        file: String,
        line: u64,
        field: String,
        message: String,
    },

    #[error("{file}: {message}")]
    Format { file: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
