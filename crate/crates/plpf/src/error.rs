//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cycle detected: bus {bus} is fed by more than one branch")]
    CycleDetected { bus: usize },

    #[error("bus {bus} has no path to the root")]
    DisconnectedBus { bus: usize },

    #[error("branch {index} is invalid: {reason}")]
    InvalidBranch { index: usize, reason: String },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },

    #[error("missing required section `{0}`")]
    MissingSection(String),

    #[error("non-numeric field at matrix row {row}, column {col}")]
    NonNumericField { row: usize, col: usize },

    #[error("unknown built-in case `{0}`")]
    UnknownCase(String),

    #[error("power flow did not converge after {iterations} iterations (residual {residual:.3e} p.u.)")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("branch {branch} has zero impedance")]
    ZeroImpedanceBranch { branch: usize },

    #[error("lambda undefined: alpha = -1 at entry {0}")]
    SingularLambda(usize),

    #[error("negative squared voltage at bus {bus}; operating point is outside model validity")]
    NegativeSquaredVoltage { bus: usize },

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("regression targets are all identical; the fit degenerates")]
    DegenerateTargets,

    #[error("Cholesky factorization failed with jitter escalated up to {max_jitter:.1e}")]
    FactorizationFailure { max_jitter: f64 },

    #[error("fingerprint mismatch: model was built for {found}, network is {expected}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("unsupported model file version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("base scenario has no nonzero injection")]
    ZeroBaseScenario,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("bus {bus} declares phase {phase} but no in-service line feeds that phase")]
    UnreachedBusPhase { bus: usize, phase: char },

    #[error("phase {phase} on line {line} is not carried by both endpoints")]
    PhaseInconsistency { line: usize, phase: char },

    #[error("report has no rows")]
    EmptyReport,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("invalid model file: {0}")]
    Json(#[from] serde_json::Error),
}
