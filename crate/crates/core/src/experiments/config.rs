//! Experiment configuration: a JSON document whose every field has a default,
//! so a config only states what differs from the defaults.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::process::{ClockRule, VertexSet};
use crate::weights::{WeightFunction, WeightSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Localization,
    Recurrence,
    Nontransience,
    TwoVertexWeak,
    TwoVertexStrong,
    CouplingDomination,
    CouplingDistribution,
    RhoSurplus,
    EngineComparison,
    DiagnosticsSuite,
    Martingale,
    Envelope,
    Restriction,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 13] = [
        ExperimentKind::Localization,
        ExperimentKind::Recurrence,
        ExperimentKind::Nontransience,
        ExperimentKind::TwoVertexWeak,
        ExperimentKind::TwoVertexStrong,
        ExperimentKind::CouplingDomination,
        ExperimentKind::CouplingDistribution,
        ExperimentKind::RhoSurplus,
        ExperimentKind::EngineComparison,
        ExperimentKind::DiagnosticsSuite,
        ExperimentKind::Martingale,
        ExperimentKind::Envelope,
        ExperimentKind::Restriction,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Localization => "localization",
            ExperimentKind::Recurrence => "recurrence",
            ExperimentKind::Nontransience => "nontransience",
            ExperimentKind::TwoVertexWeak => "two_vertex_weak",
            ExperimentKind::TwoVertexStrong => "two_vertex_strong",
            ExperimentKind::CouplingDomination => "coupling_domination",
            ExperimentKind::CouplingDistribution => "coupling_distribution",
            ExperimentKind::RhoSurplus => "rho_surplus",
            ExperimentKind::EngineComparison => "engine_comparison",
            ExperimentKind::DiagnosticsSuite => "diagnostics_suite",
            ExperimentKind::Martingale => "martingale",
            ExperimentKind::Envelope => "envelope",
            ExperimentKind::Restriction => "restriction",
        }
    }

    /// Experiments on `{0, 1}` ignore the `graph` field.
    pub fn is_two_vertex(self) -> bool {
        !matches!(
            self,
            ExperimentKind::Localization
                | ExperimentKind::Recurrence
                | ExperimentKind::Nontransience
                | ExperimentKind::EngineComparison
                | ExperimentKind::Restriction
        )
    }
}

/// Parameters of the line detectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorParams {
    /// The final window is the last `window_fraction` of the horizon.
    pub window_fraction: f64,
    /// A side vertex plateaus if its local time grows by less than this
    /// fraction of its value at the window start.
    pub side_tolerance: f64,
    /// The center must gain more than this fraction of the window length.
    pub center_growth: f64,
    /// Recurrence probes are the vertices `-r..=r`.
    pub probe_radius: i64,
    /// A transient signature needs the last visit to the start before this
    /// fraction of the horizon.
    pub early_fraction: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self { window_fraction: 0.5, side_tolerance: 0.05, center_growth: 0.5, probe_radius: 3, early_fraction: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingParams {
    pub n_jumps: u64,
    /// Jump indices `n` compared in the distributional identity.
    pub indices: Vec<u64>,
}

impl Default for CouplingParams {
    fn default() -> Self {
        Self { n_jumps: 200, indices: vec![2, 5, 10] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurplusParams {
    /// Level of `L(1)` at which `L(0)` is read off.
    pub a: f64,
    /// Initial local time at 1; the initial local time at 0 is `a`.
    pub b: f64,
    /// Replicas stop once `L(0)` reaches this level.
    pub cap: f64,
    pub grid_points: usize,
}

impl Default for SurplusParams {
    fn default() -> Self {
        Self { a: 3.0, b: 2.0, cap: 50.0, grid_points: 201 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MartingaleParams {
    pub checkpoints: Vec<f64>,
    pub increments: Vec<f64>,
}

impl Default for MartingaleParams {
    fn default() -> Self {
        Self { checkpoints: vec![1.0, 5.0, 10.0], increments: vec![0.01, 0.005] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoVertexParams {
    /// Earlier horizon compared against the final one.
    pub early_horizon: f64,
    /// Weak regime: both local times must exceed this at the horizon.
    pub min_local_time: f64,
    /// Strong regime: the smaller local time may move by at most this much
    /// between half the horizon and the horizon.
    pub plateau_tolerance: f64,
    pub z_epsilons: Vec<f64>,
    /// Strong regime: largest admissible fraction of `|Z| < z_epsilons.last()`.
    pub z_small_fraction: f64,
}

impl Default for TwoVertexParams {
    fn default() -> Self {
        Self {
            early_horizon: 1e3,
            min_local_time: 1e2,
            plateau_tolerance: 1e-6,
            z_epsilons: vec![1e-1, 1e-2, 1e-3],
            z_small_fraction: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsParams {
    pub residual_tolerance: f64,
    /// Ratio window of the pointwise sandwich.
    pub sandwich_k: f64,
    pub grid_points: usize,
}

impl Default for DiagnosticsParams {
    fn default() -> Self {
        Self { residual_tolerance: 1e-8, sandwich_k: 4.0, grid_points: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RestrictionParams {
    /// Each subset is `{0, ..., hi}`.
    pub subset_tops: Vec<i64>,
}

impl Default for RestrictionParams {
    fn default() -> Self {
        Self { subset_tops: vec![1, 2, 5] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineComparisonParams {
    /// Compare `X` after this many jumps.
    pub position_jump: u64,
    /// Compare `L(0)` after this many jumps.
    pub local_time_jump: u64,
}

impl Default for EngineComparisonParams {
    fn default() -> Self {
        Self { position_jump: 5, local_time_jump: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub weight: WeightSpec,
    /// Vertex set on the line; `None` takes the kind's default.
    pub graph: Option<VertexSet>,
    pub horizon: Option<f64>,
    /// Per-replica jump budget; a replica that exhausts it is censored.
    pub max_jumps: Option<u64>,
    pub initial_local_time: f64,
    /// Clock rule on the line; `None` takes the kind's default.
    pub rule: Option<ClockRule>,
    pub replicas: usize,
    pub seed: u64,
    /// Significance level of the two-sample tests.
    pub alpha: f64,
    /// Pass threshold on the ensemble statistic; `None` takes the kind's default.
    pub threshold: Option<f64>,
    pub detector: DetectorParams,
    pub coupling: CouplingParams,
    pub surplus: SurplusParams,
    pub martingale: MartingaleParams,
    pub two_vertex: TwoVertexParams,
    pub diagnostics: DiagnosticsParams,
    pub restriction: RestrictionParams,
    pub engine_comparison: EngineComparisonParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::Localization,
            weight: WeightSpec::Power { a: 2.0 },
            graph: None,
            horizon: None,
            max_jumps: None,
            initial_local_time: 1.0,
            rule: None,
            replicas: 100,
            seed: 0,
            alpha: 0.01,
            threshold: None,
            detector: DetectorParams::default(),
            coupling: CouplingParams::default(),
            surplus: SurplusParams::default(),
            martingale: MartingaleParams::default(),
            two_vertex: TwoVertexParams::default(),
            diagnostics: DiagnosticsParams::default(),
            restriction: RestrictionParams::default(),
            engine_comparison: EngineComparisonParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind, weight: WeightSpec) -> Self {
        Self { experiment, weight, ..Self::default() }
    }

    /// Horizon used when the config leaves it unset.
    pub fn default_horizon(kind: ExperimentKind) -> f64 {
        match kind {
            ExperimentKind::Localization
            | ExperimentKind::Recurrence
            | ExperimentKind::Nontransience
            | ExperimentKind::TwoVertexWeak
            | ExperimentKind::TwoVertexStrong => 1e4,
            ExperimentKind::Envelope => 50.0,
            ExperimentKind::Restriction => 60.0,
            _ => f64::INFINITY,
        }
    }

    pub fn effective_horizon(&self) -> f64 {
        self.horizon.unwrap_or_else(|| Self::default_horizon(self.experiment))
    }

    /// The restriction experiment runs on the half line, the others on the full line.
    pub fn effective_graph(&self) -> VertexSet {
        self.graph.clone().unwrap_or(match self.experiment {
            ExperimentKind::Restriction => VertexSet::HalfLinePlus,
            _ => VertexSet::FullLine,
        })
    }

    /// The restriction principle is stated for persistent deadlines, so that
    /// kind defaults to the accumulated rule.
    pub fn effective_rule(&self) -> ClockRule {
        self.rule.unwrap_or(match self.experiment {
            ExperimentKind::Restriction => ClockRule::Accumulated,
            _ => ClockRule::Fresh,
        })
    }

    /// Per-replica jump budget.
    pub fn effective_max_jumps(&self) -> u64 {
        self.max_jumps.unwrap_or(match self.experiment {
            ExperimentKind::DiagnosticsSuite => 500,
            ExperimentKind::TwoVertexStrong | ExperimentKind::TwoVertexWeak => 2_000_000_000,
            _ => 1_000_000_000,
        })
    }

    /// Pass threshold on the ensemble statistic. Fractions are lower bounds
    /// except for the non-transience signature, which is an upper bound.
    pub fn effective_threshold(&self) -> f64 {
        self.threshold.unwrap_or(match self.experiment {
            ExperimentKind::Localization => 0.95,
            ExperimentKind::Recurrence | ExperimentKind::TwoVertexWeak | ExperimentKind::TwoVertexStrong => 0.99,
            ExperimentKind::Nontransience => 0.01,
            _ => 0.0,
        })
    }

    /// Every problem with the config, in field order.
    pub fn problems(&self) -> Vec<String> {
        let mut out = self.weight.problems();
        let kind = self.experiment;
        if !kind.is_two_vertex() {
            if let Err(e) = self.effective_graph().validate() {
                out.push(format!("graph: {e}"));
            }
        }
        if let Some(h) = self.horizon {
            if !(h > 0.0) {
                out.push(format!("horizon: must be positive (got {h})"));
            }
        }
        if self.max_jumps == Some(0) {
            out.push("max_jumps: must be at least 1".into());
        }
        if !(self.initial_local_time.is_finite() && self.initial_local_time >= 1.0) {
            out.push(format!("initial_local_time: must be finite and >= 1 (got {})", self.initial_local_time));
        }
        if self.replicas < 1 {
            out.push("replicas: must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            out.push(format!("alpha: must lie in (0, 1) (got {})", self.alpha));
        }
        if let Some(t) = self.threshold {
            if !t.is_finite() {
                out.push(format!("threshold: must be finite (got {t})"));
            }
        }
        let d = &self.detector;
        if !(d.window_fraction > 0.0 && d.window_fraction < 1.0) {
            out.push(format!("detector.window_fraction: must lie in (0, 1) (got {})", d.window_fraction));
        }
        if !(d.early_fraction > 0.0 && d.early_fraction < 1.0) {
            out.push(format!("detector.early_fraction: must lie in (0, 1) (got {})", d.early_fraction));
        }
        if !(d.side_tolerance >= 0.0) || !(d.center_growth >= 0.0) {
            out.push("detector: side_tolerance and center_growth must be >= 0".into());
        }
        if d.probe_radius < 0 {
            out.push(format!("detector.probe_radius: must be >= 0 (got {})", d.probe_radius));
        }
        let c = &self.coupling;
        if c.n_jumps < 1 {
            out.push("coupling.n_jumps: must be at least 1".into());
        }
        if c.indices.is_empty() {
            out.push("coupling.indices: must not be empty".into());
        }
        let s = &self.surplus;
        if !(s.b >= 1.0 && s.a > s.b && s.a.is_finite()) {
            out.push(format!("surplus: need 1 <= b < a < inf (got a = {}, b = {})", s.a, s.b));
        }
        if !(s.cap > s.a) {
            out.push(format!("surplus.cap: must exceed a (got {})", s.cap));
        }
        if s.grid_points < 2 {
            out.push("surplus.grid_points: must be at least 2".into());
        }
        let m = &self.martingale;
        if m.checkpoints.is_empty() || m.checkpoints.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            out.push("martingale.checkpoints: need at least one finite time >= 0".into());
        }
        if m.increments.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            out.push("martingale.increments: must be positive".into());
        }
        if kind == ExperimentKind::Martingale && self.replicas < crate::diagnostics::MIN_MARTINGALE_RUNS {
            out.push(format!(
                "replicas: martingale checks need at least {} runs (got {})",
                crate::diagnostics::MIN_MARTINGALE_RUNS,
                self.replicas
            ));
        }
        let tv = &self.two_vertex;
        if !(tv.early_horizon > 0.0) {
            out.push(format!("two_vertex.early_horizon: must be positive (got {})", tv.early_horizon));
        }
        if tv.z_epsilons.is_empty() || tv.z_epsilons.iter().any(|e| !(*e > 0.0)) {
            out.push("two_vertex.z_epsilons: need at least one positive value".into());
        }
        if !(self.diagnostics.sandwich_k >= 1.0) {
            out.push(format!("diagnostics.sandwich_k: must be >= 1 (got {})", self.diagnostics.sandwich_k));
        }
        if self.restriction.subset_tops.iter().any(|&hi| hi < 1) {
            out.push("restriction.subset_tops: each subset {0..hi} needs hi >= 1".into());
        }
        let e = &self.engine_comparison;
        if e.position_jump < 1 || e.local_time_jump < 1 {
            out.push("engine_comparison: jump indices must be at least 1".into());
        }
        // kind-specific requirements
        let regime = WeightFunction::from_spec(&self.weight).map(|w| w.classify_regime().regime);
        let strong = matches!(regime, Ok(crate::weights::Regime::Strong));
        match kind {
            ExperimentKind::TwoVertexStrong | ExperimentKind::Envelope if !strong => {
                out.push(format!("weight: {} needs a strong-regime weight", kind.name()));
            }
            ExperimentKind::TwoVertexWeak if strong => {
                out.push("weight: two_vertex_weak needs a weak-regime weight".into());
            }
            _ => {}
        }
        if kind == ExperimentKind::TwoVertexWeak || kind == ExperimentKind::TwoVertexStrong {
            let h = self.effective_horizon();
            if !(tv.early_horizon < h) {
                out.push(format!("two_vertex.early_horizon: must be below the horizon {h}"));
            }
        }
        if matches!(
            kind,
            ExperimentKind::Localization
                | ExperimentKind::Recurrence
                | ExperimentKind::Nontransience
                | ExperimentKind::TwoVertexWeak
                | ExperimentKind::TwoVertexStrong
                | ExperimentKind::Envelope
                | ExperimentKind::Restriction
        ) && !self.effective_horizon().is_finite()
        {
            out.push(format!("horizon: {} needs a finite horizon", kind.name()));
        }
        out
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(json))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_missing_fields() {
        let c: ExperimentConfig =
            serde_json::from_str(r#"{"experiment":"recurrence","weight":{"kind":"linear"}}"#).unwrap();
        assert_eq!(c.experiment, ExperimentKind::Recurrence);
        assert_eq!(c.detector.window_fraction, 0.5);
        assert_eq!(c.effective_horizon(), 1e4);
        assert_eq!(c.effective_threshold(), 0.99);
        assert!(c.problems().is_empty());
    }

    #[test]
    fn all_problems_are_reported() {
        let c: ExperimentConfig = serde_json::from_str(
            r#"{"weight":{"kind":"power","a":-1},"replicas":0,"alpha":2,"detector":{"window_fraction":1.5}}"#,
        )
        .unwrap();
        let p = c.problems();
        assert_eq!(p.len(), 4, "{p:?}");
        assert!(p[0].contains("exponent must be > 0"));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"replica":3}"#).is_err());
    }

    #[test]
    fn regime_requirements() {
        let strong = ExperimentConfig::new(ExperimentKind::TwoVertexStrong, WeightSpec::Linear);
        assert!(strong.problems().iter().any(|p| p.contains("strong-regime")));
        let weak = ExperimentConfig::new(ExperimentKind::TwoVertexWeak, WeightSpec::Power { a: 2.0 });
        assert!(weak.problems().iter().any(|p| p.contains("weak-regime")));
    }

    #[test]
    fn digest_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.seed = 1;
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn every_kind_round_trips() {
        for k in ExperimentKind::ALL {
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.name()));
            assert_eq!(serde_json::from_str::<ExperimentKind>(&json).unwrap(), k);
        }
    }
}
