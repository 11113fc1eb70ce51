use thiserror::Error;

/// Errors raised by the laboratory's numerical operations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    /// An argument lies outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A model or profile failed validation.
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    /// A surface-of-revolution profile violates one of its defining conditions.
    #[error("profile violates {condition} at z = {witness}")]
    Profile { condition: &'static str, witness: f64 },

    /// The adaptive integrator could not meet its tolerance.
    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    /// No equatorial crossing within the time budget.
    #[error("no return to the equator within t = {budget}")]
    NoReturn { budget: f64 },

    /// A grid is too coarse to separate the features it resolves.
    #[error("resolution error: {0}")]
    Resolution(String),

    /// A regression design matrix does not determine the coefficients.
    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    /// Not enough data to perform a fit.
    #[error("insufficient data: {0}")]
    Insufficient(String),

    /// The QR frame lost rank during Lyapunov accumulation.
    #[error("degenerate frame at t = {0}")]
    DegenerateFrame(f64),

    /// The greedy separated set used every sample in the pool.
    #[error("sample starvation: separated set saturated the pool of {0} samples")]
    SampleStarvation(usize),

    /// Phase counting and bisection disagree on an eigenvalue bracket.
    #[error("bracket failure for index {index}: {reason}")]
    Bracket { index: usize, reason: String },

    /// An exact count exceeds the 64-bit range.
    #[error("count overflow")]
    Overflow,

    /// The requested parameter plan violates the Ehrenfest-time cap.
    #[error("plan infeasible: T = {time} exceeds cap {cap}")]
    PlanInfeasible { time: f64, cap: f64 },

    /// Aligned sequences have different lengths.
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> LabError {
    LabError::Domain(msg.into())
}
