use thiserror::Error;

/// Errors raised across the phase-macromodel pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    #[error(
        "Newton iteration did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("degenerate Jacobian: {0}")]
    DegenerateJacobian(String),

    #[error("lock frequency became non-positive ({0})")]
    NonPositiveFrequency(f64),

    #[error("no Floquet multiplier within {tol:e} of 1 (closest {closest})")]
    MissingUnityMultiplier { tol: f64, closest: String },

    #[error("{count} Floquet multipliers within {tol:e} of 1; the locked orbit is not isolated")]
    RepeatedUnityMultiplier { count: usize, tol: f64 },

    #[error("unstable lock: Floquet multiplier with modulus {modulus} exceeds 1")]
    UnstableLock { modulus: f64 },

    #[error("group model refused: {0}")]
    StabilityRefused(String),

    #[error("missing steady-state waveform for oscillator `{0}`")]
    MissingSteadyState(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
