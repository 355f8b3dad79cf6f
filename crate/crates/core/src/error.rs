//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("H^k diagnostic exceeded the blow-up ceiling ({ceiling:.3e}) at t = {t:.6}: norm = {norm:.3e}")]
    Blowup { t: f64, norm: f64, ceiling: f64 },

    #[error("flow-map resolution mismatch: {0} vs {1} seeds per axis")]
    ResolutionMismatch(usize, usize),

    #[error("isotopy target violates the Jacobian determinant floor ({floor}) at t = {t:.4}: det = {det:.4e}")]
    JacobianFloor { t: f64, det: f64, floor: f64 },

    #[error("no saturation witness covers the direction {dir:?} at mode {mode:?} ({kind}); residual {residual:.3e}")]
    MissingWitness {
        mode: [i64; 3],
        kind: &'static str,
        dir: [f64; 3],
        residual: f64,
    },

    #[error("malformed certificate step {step}: {reason}")]
    MalformedCertificate { step: usize, reason: String },

    #[error("staircase piece count {pieces} exceeds the cap {cap}; deep descents need nested oscillation scales")]
    PieceCountExceeded { pieces: usize, cap: usize },

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),

    #[error("TOML: {0}")]
    Toml(#[from] toml::de::Error),
}
