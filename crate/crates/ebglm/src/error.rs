use crate::data::Configuration;

/// Errors produced by model fitting, scoring, and the surrounding pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Input data or arguments violate a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The request exceeds a deliberate scale guard (exact enumeration and
    /// support sweeps are exponential in the problem size).
    #[error("unsupported scale: {0}")]
    Unsupported(String),

    /// A natural parameter grew past the point where the cumulant function
    /// can be evaluated in double precision.
    #[error("natural parameter {eta:.3} exceeds the overflow guard {guard}")]
    Overflow { eta: f64, guard: f64 },

    /// The observed information matrix could not be factorized.
    #[error("information matrix for configuration {0} is singular or indefinite")]
    SingularInformation(Configuration),

    /// Newton iteration ran out of iterations away from any boundary.
    #[error("fit for configuration {config} did not converge after {iterations} iterations (score norm {score_norm:.3e})")]
    NonConvergence {
        config: Configuration,
        iterations: usize,
        score_norm: f64,
    },

    /// A chain-based summary was requested for a configuration the chain
    /// never visited.
    #[error("chain never visited configuration {0}")]
    NeverVisited(Configuration),

    /// A cached fit expected by an aggregation step is missing; indicates a
    /// cache and chain that do not belong together.
    #[error("no cached fit available for sampled configuration {0}")]
    MissingFit(Configuration),

    /// Every replication of a simulation setting failed, leaving nothing to
    /// aggregate.
    #[error("all {replications} replications failed for setting {setting}; first failure: {first_failure}")]
    AllReplicationsFailed {
        setting: String,
        replications: usize,
        first_failure: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
