//! Configuration loading: one JSON document plus dotted-path `--set`
//! overrides, hashed canonically for reproducibility manifests.

use std::fmt;
use std::path::Path;

use afmech_core::labeling::ProblemSpec;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

/// CLI error with the exit-code contract: 1 for configuration problems,
/// 2 for runtime/integration failures and failed verification checks.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Run(String),
    ChecksFailed(usize),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Run(_) | CliError::ChecksFailed(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Run(msg) => write!(f, "run failed: {msg}"),
            CliError::ChecksFailed(n) => write!(f, "{n} verification check(s) failed"),
        }
    }
}

impl std::error::Error for CliError {}

/// Which flow the `trace` command integrates.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AffinityConfig {
    /// `F(S) = Omega S` with the configured averaging matrix.
    #[default]
    Omega,
    /// The inadmissible rank-one map `p -> p^1 e_2` (needs >= 3 labels).
    Counterexample,
    /// A fixed per-row linear map, given as an `n x n` matrix.
    RowLinear(Vec<Vec<f64>>),
}

/// Initial state selection.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartConfig {
    /// `lift(barycenter, -Omega D)` from the synthetic dataset.
    #[default]
    SflowInit,
    Barycenter,
    /// Explicit assignment rows.
    Rows(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Config {
    #[serde(flatten)]
    pub problem: ProblemSpec,
    #[serde(default)]
    pub affinity: AffinityConfig,
    #[serde(default)]
    pub start: StartConfig,
    /// Load the averaging matrix from a CSV or AFM1 file instead of building
    /// it from the grid.
    #[serde(default)]
    pub omega_file: Option<String>,
}

pub struct LoadedConfig {
    pub config: Config,
    /// SHA-256 over the canonical (sorted-key) JSON after overrides.
    pub hash: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn apply_set(root: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set expects key=value, got {assignment:?}")))?;
    let parsed: Value =
        serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cursor = root;
    let segments: Vec<&str> = path.split('.').collect();
    for (i, seg) in segments.iter().enumerate() {
        if seg.is_empty() {
            return Err(CliError::Config(format!("empty path segment in {path:?}")));
        }
        let obj = cursor.as_object_mut().ok_or_else(|| {
            CliError::Config(format!("cannot descend into non-object at {seg:?} in {path:?}"))
        })?;
        if i + 1 == segments.len() {
            obj.insert((*seg).to_string(), parsed);
            return Ok(());
        }
        cursor = obj.entry((*seg).to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("loop returns on the last segment")
}

/// Reads, overrides and validates the configuration. JSON syntax errors are
/// reported with line and column.
pub fn load_config(
    path: &Path,
    sets: &[String],
    seed_override: Option<u64>,
) -> Result<LoadedConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut value: Value = serde_json::from_str(&text).map_err(|e| {
        CliError::Config(format!(
            "{} at line {}, column {}",
            e,
            e.line(),
            e.column()
        ))
    })?;
    for assignment in sets {
        apply_set(&mut value, assignment)?;
    }
    if let Some(seed) = seed_override {
        apply_set(&mut value, &format!("seed={seed}"))?;
    }
    // serde_json maps are sorted, so this serialization is canonical.
    let canonical = serde_json::to_string(&value)
        .map_err(|e| CliError::Config(format!("cannot reserialize config: {e}")))?;
    let hash = sha256_hex(canonical.as_bytes());
    let config: Config = serde_json::from_value(value)
        .map_err(|e| CliError::Config(e.to_string()))?;
    config.problem.integrator.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(LoadedConfig { config, hash })
}
