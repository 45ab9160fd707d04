use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("theta {theta:?} is outside the natural-parameter domain")]
    OutOfDomain { theta: Vec<f64> },

    #[error("tilt solve did not converge for mu = {mu:?}: {detail}")]
    NonConvergence { mu: Vec<f64>, detail: String },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    IterationCap {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("mean {mu:?} is not attainable: {detail}")]
    Unattainable { mu: Vec<f64>, detail: String },

    #[error("no positive root of the cgf along {direction:?}")]
    NoPositiveRoot { direction: Vec<f64> },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("mixture is empty: {0}")]
    EmptyMixture(String),

    #[error("non-finite likelihood ratio from component {component}: {detail}")]
    Overflow { component: usize, detail: String },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("refused: {0}")]
    Refused(String),
}
