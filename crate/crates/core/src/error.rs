use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("value {value} outside the admissible range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("grid construction failed: {0}")]
    Grid(String),

    #[error("slope at the origin is not finite on this grid: {0}")]
    DegenerateSlope(String),

    #[error("source term is not O(y) at the origin (psi(y)/y ~ {ratio:e} at y = {y:e})")]
    SingularSource { y: f64, ratio: f64 },

    #[error("g~ + M*phi is negative (min {min_value:e} at y = {y:e}) for M = {m}")]
    MTooSmall { m: f64, y: f64, min_value: f64 },

    #[error("no M <= {limit} makes g~ + M*phi nonnegative")]
    MInfeasible { limit: f64 },

    #[error("asymptotic claim `{claim}` violated: deviation ratios {ratios:?} grow with the window")]
    AsymptoticsViolation { claim: String, ratios: Vec<f64> },

    #[error("matching constant K = {k} makes a'(0) <= 0")]
    InvalidK { k: f64 },

    #[error("log a must be positive (a = {a})")]
    Domain { a: f64 },

    #[error("Newton iteration failed to converge at t = {t} with dt = {dt:e}")]
    SolverFailure { t: f64, dt: f64 },

    #[error("maximum principle violated at t = {t}: {detail}")]
    MaximumPrinciple { t: f64, detail: String },

    #[error("boundary layer unresolved: {0}")]
    Resolution(String),

    #[error("no time shift <= {shift_max} orders the {which} barrier against the solution")]
    OrderingFailure { which: &'static str, shift_max: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
