//! Error type shared by all modules.

use thiserror::Error;

/// Errors produced by manifold operations, integrators and the labeling
/// pipeline. Domain violations (boundary contact, divergence) are reported
/// here; shape mismatches between matrices that were constructed consistently
/// are treated as programmer errors and panic instead.
#[derive(Debug, Error)]
pub enum AfError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid simplex point: {0}")]
    InvalidSimplex(String),

    #[error("invalid tangent: {0}")]
    InvalidTangent(String),

    #[error("invalid assignment matrix: {0}")]
    InvalidAssignment(String),

    #[error("state entry {value:.3e} below the division guard {guard:.0e}; the flow touched the simplex boundary")]
    Singular { value: f64, guard: f64 },

    #[error("invalid averaging matrix: {0}")]
    InvalidOmega(String),

    #[error("the counterexample affinity needs n >= 3 labels (for n = 2 every affinity satisfies the admissibility condition), got n = {0}")]
    CounterexampleLabels(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("need at least {need} trajectory samples, got {got}")]
    TooFewSamples { need: usize, got: usize },

    #[error("trajectory samples are not uniformly spaced (spacing {first:.6e} vs {found:.6e} at index {index})")]
    NonUniformSampling { first: f64, found: f64, index: usize },

    #[error("integration diverged at step {step}: {reason}")]
    Diverged { step: usize, reason: String },

    #[error("positivity-floor storm at step {step}: {floored} of {total} entries clamped in one step")]
    FloorStorm { step: usize, floored: usize, total: usize },

    #[error("trajectory sample {sample} lies on the critical set: -G = {gap:.3e} < {min:.0e}")]
    CriticalSet { sample: usize, gap: f64, min: f64 },

    #[error("problem size {size} exceeds the dense-computation cap {cap}")]
    SizeCap { size: usize, cap: usize },

    #[error("kernel dimension computed two ways disagrees: brute force {brute}, rank formula {formula}")]
    KernelDimMismatch { brute: usize, formula: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, AfError>;
