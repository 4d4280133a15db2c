use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid Fock truncation {0}: need at least 1")]
    InvalidTruncation(usize),

    #[error("label `{label}` not found in factor `{factor}`")]
    LabelNotFound { factor: String, label: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("model is time dependent: {0}")]
    TimeDependent(String),

    #[error("degenerate steady state: populations of {} are not fixed by the generator", levels.join(", "))]
    DegenerateSteadyState { levels: Vec<String> },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("steady state not positive: clipped eigenvalue mass {0:e}")]
    Positivity(f64),

    #[error("no convergence after {steps} steps (residual {residual:e})")]
    Convergence { steps: usize, residual: f64 },

    #[error("step size underflow at t = {t} us: {detail}")]
    StepUnderflow { t: f64, detail: String },

    #[error("correlation still at {remaining:e} of its initial value after {span} us")]
    Window { span: f64, remaining: f64 },

    #[error("{0} is undefined for an empty cavity")]
    Undefined(&'static str),

    #[error("too few clicks for a correlation estimate: {0}")]
    Statistics(usize),

    #[error("ensemble failed: {failed} of {total} runs failed; first error: {first}")]
    Ensemble {
        failed: usize,
        total: usize,
        first: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
