use thiserror::Error;

use crate::collapse::CollapseState;
use crate::pde::{RadialProfile, Trajectory};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("collapsed input: non-positive radius {value} at node {node}")]
    CollapsedInput { node: usize, value: f64 },

    #[error("numerical overflow in stencil at node {node}")]
    NumericalOverflow { node: usize },

    #[error("step rejected ({reason}); retry with dt <= {suggested_dt:e}")]
    StepRejected { suggested_dt: f64, reason: String },

    #[error("collapse detected at t = {}", .last.t)]
    CollapseDetected { last: Box<RadialProfile> },

    #[error("rescaled run reached the collapse threshold at tau = {}", .last.tau)]
    RescaledCollapse { last: Box<CollapseState> },

    #[error("time {t} is at or past the collapse time {t_star}")]
    PastCollapse { t: f64, t_star: f64 },

    #[error("domain exhausted: need x up to {needed}, grid ends at {available}")]
    DomainExhausted { needed: f64, available: f64 },

    #[error("scale underflow: lambda^2 = {lambda_sq:e}")]
    ScaleUnderflow { lambda_sq: f64 },

    #[error("modulation fit failed after {iterations} iterations ({reason}); last iterate a = {a}, b = {b}")]
    FitFailed {
        a: f64,
        b: f64,
        iterations: usize,
        reason: String,
    },

    #[error("fit left the admissible cone: b = {b}")]
    LeftAdmissibleCone { b: f64 },

    #[error("domain too small: boundary weight {weight:e} exceeds 1e-14")]
    DomainTooSmall { weight: f64 },

    #[error("pinch-time fit unreliable: {0}")]
    PinchFitUnreliable(String),

    #[error("diagnostic window too short: {0}")]
    WindowTooShort(String),

    #[error("spectrum computation failed: {0}")]
    SpectrumFailed(String),

    #[error("propagator probe inconclusive: {0}")]
    ProbeInconclusive(String),

    #[error("wall-clock budget of {budget_s} s exceeded")]
    BudgetExceeded {
        budget_s: f64,
        partial: Box<Trajectory>,
    },

    #[error("config error{}: {message}", .line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config {
        line: Option<usize>,
        message: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("incompatible checkpoint: {0}")]
    IncompatibleCheckpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag used in error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::CollapsedInput { .. } => "collapsed-input",
            Error::NumericalOverflow { .. } => "numerical-overflow",
            Error::StepRejected { .. } => "step-rejected",
            Error::CollapseDetected { .. } | Error::RescaledCollapse { .. } => "collapse-detected",
            Error::PastCollapse { .. } => "past-collapse",
            Error::DomainExhausted { .. } => "domain-exhausted",
            Error::ScaleUnderflow { .. } => "scale-underflow",
            Error::FitFailed { .. } => "fit-failed",
            Error::LeftAdmissibleCone { .. } => "left-admissible-cone",
            Error::DomainTooSmall { .. } => "domain-too-small",
            Error::PinchFitUnreliable(_) => "pinch-fit-unreliable",
            Error::WindowTooShort(_) => "window-too-short",
            Error::SpectrumFailed(_) => "spectrum-failed",
            Error::ProbeInconclusive(_) => "probe-inconclusive",
            Error::BudgetExceeded { .. } => "budget-exceeded",
            Error::Config { .. } => "config",
            Error::InvalidInput(_) => "invalid-input",
            Error::IncompatibleCheckpoint(_) => "incompatible-checkpoint",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
