//! Config documents of the non-experiment subcommands. Every field has a
//! default and unknown fields are rejected.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use vrjp_core::process::{ClockRule, InitialLocalTimes, RunLimits, VertexSet};
use vrjp_core::weights::WeightSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub weight: WeightSpec,
    pub graph: VertexSet,
    pub horizon: Option<f64>,
    pub max_jumps: Option<u64>,
    pub initial_local_time: f64,
    pub rule: ClockRule,
    pub seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            weight: WeightSpec::Linear,
            graph: VertexSet::FullLine,
            horizon: None,
            max_jumps: None,
            initial_local_time: 1.0,
            rule: ClockRule::Fresh,
            seed: 0,
        }
    }
}

impl SimulateConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = self.weight.problems();
        if let Err(e) = self.graph.validate() {
            out.push(format!("graph: {e}"));
        }
        if let Some(h) = self.horizon {
            if !(h > 0.0) {
                out.push(format!("horizon: must be positive (got {h})"));
            }
        }
        if self.max_jumps == Some(0) {
            out.push("max_jumps: must be at least 1".into());
        }
        if self.horizon.is_none() && self.max_jumps.is_none() {
            out.push("horizon/max_jumps: at least one stopping rule is required".into());
        }
        if !(self.initial_local_time.is_finite() && self.initial_local_time >= 1.0) {
            out.push(format!("initial_local_time: must be finite and >= 1 (got {})", self.initial_local_time));
        }
        out
    }

    pub fn limits(&self) -> RunLimits {
        RunLimits { horizon: self.horizon, max_jumps: self.max_jumps }
    }

    pub fn initial(&self) -> InitialLocalTimes {
        InitialLocalTimes::uniform(self.initial_local_time)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoupleConfig {
    pub weight: WeightSpec,
    pub n_jumps: u64,
    /// Head start of the starred process; drawn from the seed when absent.
    pub a: Option<f64>,
    pub seed: u64,
}

impl Default for CoupleConfig {
    fn default() -> Self {
        Self { weight: WeightSpec::Linear, n_jumps: 200, a: None, seed: 0 }
    }
}

impl CoupleConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = self.weight.problems();
        if self.n_jumps < 1 {
            out.push("n_jumps: must be at least 1".into());
        }
        if let Some(a) = self.a {
            if !(a > 0.0 && a.is_finite()) {
                out.push(format!("a: must be positive and finite (got {a})"));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseConfig {
    /// Event CSV written by `simulate`. Relative paths resolve against the
    /// directory of the config file.
    pub trajectory: Option<PathBuf>,
    /// Metadata JSON; defaults to `<trajectory stem>.meta.json`.
    pub meta: Option<PathBuf>,
    /// Overrides the weight recorded in the metadata.
    pub weight: Option<WeightSpec>,
    /// Extra uniform grid rows on `[0, horizon]`.
    pub grid_points: usize,
    pub sandwich_k: f64,
    pub residual_tol: f64,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        Self { trajectory: None, meta: None, weight: None, grid_points: 0, sandwich_k: 4.0, residual_tol: 1e-8 }
    }
}

impl DiagnoseConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = self.weight.map(|w| w.problems()).unwrap_or_default();
        if self.trajectory.is_none() {
            out.push("trajectory: path to an event CSV is required".into());
        }
        if !(self.sandwich_k >= 1.0) {
            out.push(format!("sandwich_k: must be >= 1 (got {})", self.sandwich_k));
        }
        if !(self.residual_tol > 0.0) {
            out.push(format!("residual_tol: must be positive (got {})", self.residual_tol));
        }
        out
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.trajectory, &mut self.meta].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn meta_path(&self) -> Option<PathBuf> {
        self.meta.clone().or_else(|| self.trajectory.as_ref().map(|t| default_meta_path(t)))
    }
}

/// `dir/name.csv` -> `dir/name.meta.json`.
pub fn default_meta_path(events: &Path) -> PathBuf {
    let stem = events.file_stem().and_then(|s| s.to_str()).unwrap_or("trajectory");
    events.with_file_name(format!("{stem}.meta.json"))
}

/// Reads and parses a JSON config. `inline` allows the argument itself to be
/// a JSON document.
pub fn load<T: DeserializeOwned>(arg: &str, inline: bool) -> Result<T, String> {
    let text = if inline && arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).map_err(|e| format!("config {arg}: {e}"))?
    };
    serde_json::from_str(&text).map_err(|e| format!("config {arg}: {e}"))
}

pub fn digest<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
