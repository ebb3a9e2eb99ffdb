//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by model validation, chain analytics, estimation,
/// policies, and study drivers.
#[derive(Debug, Error)]
pub enum Error {
    /// Instance fails a structural invariant (mixture weights, sign
    /// constraints, parameter box membership).
    #[error("malformed instance: {0}")]
    MalformedInstance(String),

    /// A purchase probability is exactly zero somewhere the chain must
    /// visit, so the redemption cycle cannot complete.
    #[error("degenerate chain: purchase probability is 0 at tau={tau} (n={n})")]
    DegenerateChain { tau: u32, n: u32 },

    /// Non-personalized optimum has zero revenue; ratios are undefined.
    #[error("zero revenue benchmark")]
    ZeroRevenue,

    /// Deterministic cycle (phi identically 1) never mixes.
    #[error("periodic chain: phi is 1 at every state, chain never mixes")]
    PeriodicChain,

    /// Mixing-time search exceeded the iteration cap.
    #[error("mixing time exceeded iteration cap of {0}")]
    IterationCap(u64),

    /// rho_k * M is not an integer, so customers cannot be partitioned.
    #[error("non-integral partition: rho={rho} * m={m} is not integral")]
    NonIntegralPartition { rho: f64, m: u64 },

    /// A model probability sits at 0 or 1 for an observed sample, where the
    /// Bernoulli log-likelihood is undefined.
    #[error("probability at boundary for tau={tau}: mu={mu}")]
    ProbabilityAtBoundary { tau: u32, mu: f64 },

    /// All observed points-to-redemption are equal: the design matrix is
    /// singular and the fit was not allowed to regularize.
    #[error("degenerate fit: rank-deficient design ({0} distinct tau values)")]
    Degenerate(usize),

    /// Confidence parameter outside (0, 1).
    #[error("invalid delta: {0} (must lie in (0,1))")]
    InvalidDelta(f64),

    /// Horizon shorter than the first epoch of the schedule.
    #[error("horizon {t} too short for first epoch length {t1}")]
    HorizonTooShort { t: u64, t1: u64 },

    /// Parameter outside its admissible range.
    #[error("out of range: {0}")]
    OutOfRange(String),

    /// Generic configuration problem (CLI / study configs).
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Filesystem failure, annotated with the offending path.
    #[error("i/o error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// JSON (de)serialization failure.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Attach a path to an I/O error.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
