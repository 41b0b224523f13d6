use thiserror::Error;

/// Errors raised by the simulation and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// `1 - x` fell below the singular floor while evaluating the vector field.
    #[error("singular input: x = {x} is within {floor:e} of the gap")]
    Singular { x: f64, floor: f64 },

    #[error("AC/DC ratio undefined: V_dc = 0 with V_ac = {v_ac}")]
    UndefinedRatio { v_ac: f64 },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("maximum number of integration steps ({0}) exceeded")]
    TooManySteps(usize),

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("shot left the physical window: {0}")]
    EventInterrupted(String),

    #[error("seed orbit invalid: residual {residual:e} exceeds tolerance")]
    SeedInvalid { residual: f64 },

    #[error("bracket invalid: orbit still exists at c = {c_hi}")]
    BracketInvalid { c_hi: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
