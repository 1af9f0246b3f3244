//! Reinforcement functions and their reciprocal integrals.
//!
//! A weight function `w` maps a local time `t >= 1` to a jump rate. Only the
//! restriction of `w` to `[1, inf)` is represented: with unit initial local
//! times no simulated local time ever drops below one, and vertices outside a
//! vertex set are excluded structurally instead of through `w(0) = 0`.
//!
//! Built-in kinds have closed-form primitives of `1/w^q`. Custom functions fall
//! back on adaptive quadrature with a dyadic monotone tail bound.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature;

/// Target accuracy for quadrature-backed integrals.
pub const QUADRATURE_TOL: f64 = 1e-10;

/// Relative tolerance for the grid monotonicity check of `w^rho * I`.
pub const RHO_GRID_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error("weight function evaluated at t = {t}, below the domain floor 1")]
    Domain { t: f64 },
    #[error("custom weight `{name}` returned {value} at t = {t}")]
    Evaluator { name: String, t: f64, value: f64 },
    #[error("tail integral of `{name}` from t = {t} could not be certified below {tol:e}")]
    ToleranceNotAchievable { name: String, t: f64, tol: f64 },
    #[error("invalid weight parameter: {0}")]
    InvalidParameter(String),
}

/// User-supplied increasing weight function.
#[derive(Clone)]
pub struct CustomWeight {
    name: String,
    eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    tail_converges: bool,
}

impl CustomWeight {
    /// `tail_converges` declares whether `int_1^inf du / w(u)` is finite.
    pub fn new<F>(name: impl Into<String>, tail_converges: bool, eval: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self { name: name.into(), eval: Arc::new(eval), tail_converges }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn tail_converges(&self) -> bool {
        self.tail_converges
    }
}

impl fmt::Debug for CustomWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomWeight").field("name", &self.name).field("tail_converges", &self.tail_converges).finish()
    }
}

#[derive(Debug, Clone)]
pub enum WeightKind {
    /// `w(t) = t`.
    Linear,
    /// `w(t) = t^a`.
    Power {
        exponent: f64,
    },
    /// `w(t) = exp(a (t - 1))`, normalized so that `w(1) = 1`.
    ExpShifted {
        rate: f64,
    },
    Custom(CustomWeight),
}

/// Serializable description of a built-in weight function, as used in configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSpec {
    Linear,
    Power { a: f64 },
    ExpShifted { a: f64 },
}

impl WeightSpec {
    /// All parameter problems, in field order.
    pub fn problems(&self) -> Vec<String> {
        match *self {
            WeightSpec::Linear => Vec::new(),
            WeightSpec::Power { a } if !(a.is_finite() && a > 0.0) => {
                vec![format!("weight.a: exponent must be > 0 (got {a})")]
            }
            WeightSpec::ExpShifted { a } if !(a.is_finite() && a > 0.0) => {
                vec![format!("weight.a: rate must be > 0 (got {a})")]
            }
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct WeightFunction {
    kind: WeightKind,
}

/// Outcome of the rho search for the strong-regime monotonicity condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoCondition {
    pub rho: f64,
    pub verified: bool,
    pub grid_max_violation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Weak,
    Strong,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::Weak => f.write_str("Weak"),
            Regime::Strong => f.write_str("Strong"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub regime: Regime,
    /// `I(1)`; `None` encodes `+inf` in serialized form.
    #[serde(with = "infinite_as_null")]
    pub tail_integral_at_1: f64,
    pub rho_condition: Option<RhoCondition>,
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl fmt::Display for RegimeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.tail_integral_at_1.is_finite() {
            write!(f, "{}, I(1)={}", self.regime, self.tail_integral_at_1)?;
        } else {
            write!(f, "{}, I(1)=inf", self.regime)?;
        }
        match &self.rho_condition {
            Some(rc) => write!(f, ", rho={} {}", rc.rho, if rc.verified { "verified" } else { "inconclusive" }),
            None => Ok(()),
        }
    }
}

impl WeightFunction {
    pub fn linear() -> Self {
        Self { kind: WeightKind::Linear }
    }

    pub fn power(exponent: f64) -> Result<Self, WeightError> {
        if !(exponent.is_finite() && exponent > 0.0) {
            return Err(WeightError::InvalidParameter(format!("exponent must be > 0 (got {exponent})")));
        }
        Ok(Self { kind: WeightKind::Power { exponent } })
    }

    pub fn exp_shifted(rate: f64) -> Result<Self, WeightError> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(WeightError::InvalidParameter(format!("rate must be > 0 (got {rate})")));
        }
        Ok(Self { kind: WeightKind::ExpShifted { rate } })
    }

    pub fn custom(custom: CustomWeight) -> Self {
        Self { kind: WeightKind::Custom(custom) }
    }

    pub fn from_spec(spec: &WeightSpec) -> Result<Self, WeightError> {
        match *spec {
            WeightSpec::Linear => Ok(Self::linear()),
            WeightSpec::Power { a } => Self::power(a),
            WeightSpec::ExpShifted { a } => Self::exp_shifted(a),
        }
    }

    /// The config-level description, when this is a built-in kind.
    pub fn spec(&self) -> Option<WeightSpec> {
        match self.kind {
            WeightKind::Linear => Some(WeightSpec::Linear),
            WeightKind::Power { exponent } => Some(WeightSpec::Power { a: exponent }),
            WeightKind::ExpShifted { rate } => Some(WeightSpec::ExpShifted { a: rate }),
            WeightKind::Custom(_) => None,
        }
    }

    pub fn kind(&self) -> &WeightKind {
        &self.kind
    }

    pub fn name(&self) -> String {
        match &self.kind {
            WeightKind::Linear => "linear".to_string(),
            WeightKind::Power { exponent } => format!("power(a={exponent})"),
            WeightKind::ExpShifted { rate } => format!("exp_shifted(a={rate})"),
            WeightKind::Custom(c) => c.name.clone(),
        }
    }

    /// `w(t)` without domain checks. Callers guarantee `t >= 1`.
    #[inline(always)]
    pub fn value(&self, t: f64) -> f64 {
        match &self.kind {
            WeightKind::Linear => t,
            WeightKind::Power { exponent } => {
                let a = *exponent;
                if a == 2.0 {
                    t * t
                } else if a == 1.0 {
                    t
                } else if a == 3.0 {
                    t * t * t
                } else {
                    t.powf(a)
                }
            }
            WeightKind::ExpShifted { rate } => (rate * (t - 1.0)).exp(),
            WeightKind::Custom(c) => (c.eval)(t),
        }
    }

    pub fn eval(&self, t: f64) -> Result<f64, WeightError> {
        if !(t >= 1.0) {
            return Err(WeightError::Domain { t });
        }
        let v = self.value(t);
        if let WeightKind::Custom(c) = &self.kind {
            if !(v.is_finite() && v > 0.0) {
                return Err(WeightError::Evaluator { name: c.name.clone(), t, value: v });
            }
        }
        Ok(v)
    }

    /// Whether `w` may be evaluated in a hot loop without per-call validation.
    pub fn is_builtin(&self) -> bool {
        !matches!(self.kind, WeightKind::Custom(_))
    }

    /// `I(t) = int_t^inf du / w(u)`, `+inf` when divergent.
    pub fn tail_integral(&self, t: f64) -> Result<f64, WeightError> {
        self.tail_integral_pow(t, 1.0)
    }

    /// `int_t^inf du / w(u)^q`, `+inf` when divergent.
    pub fn tail_integral_pow(&self, t: f64, q: f64) -> Result<f64, WeightError> {
        if !(t >= 1.0) {
            return Err(WeightError::Domain { t });
        }
        if t.is_infinite() {
            return Ok(0.0);
        }
        match &self.kind {
            WeightKind::Linear => Ok(power_tail(t, q)),
            WeightKind::Power { exponent } => Ok(power_tail(t, exponent * q)),
            WeightKind::ExpShifted { rate } => Ok((-rate * q * (t - 1.0)).exp() / (rate * q)),
            WeightKind::Custom(c) => {
                // A divergent 1/w tail does not decide the 1/w^q tail for q > 1.
                if q == 1.0 && !c.tail_converges {
                    return Ok(f64::INFINITY);
                }
                custom_tail(c, t, q)
            }
        }
    }

    /// `int_1^t du / w(u)`, finite for every finite `t`.
    pub fn head_integral(&self, t: f64) -> Result<f64, WeightError> {
        self.integral(1.0, t)
    }

    /// `int_lo^hi du / w(u)` for `1 <= lo <= hi` (negated when `hi < lo`).
    pub fn integral(&self, lo: f64, hi: f64) -> Result<f64, WeightError> {
        if !(lo >= 1.0) {
            return Err(WeightError::Domain { t: lo });
        }
        if !(hi >= 1.0) {
            return Err(WeightError::Domain { t: hi });
        }
        if hi < lo {
            return self.integral(hi, lo).map(|v| -v);
        }
        match &self.kind {
            WeightKind::Linear => Ok(hi.ln() - lo.ln()),
            WeightKind::Power { exponent } => {
                let a = *exponent;
                if a == 1.0 {
                    Ok(hi.ln() - lo.ln())
                } else if a == 2.0 {
                    Ok(1.0 / lo - 1.0 / hi)
                } else {
                    Ok((hi.powf(1.0 - a) - lo.powf(1.0 - a)) / (1.0 - a))
                }
            }
            WeightKind::ExpShifted { rate } => {
                let a = *rate;
                // exp(-a(lo-1)) (1 - exp(-a(hi-lo))) / a, stable for close endpoints.
                Ok((-a * (lo - 1.0)).exp() * -(-a * (hi - lo)).exp_m1() / a)
            }
            WeightKind::Custom(c) => {
                check_custom(c, lo)?;
                check_custom(c, hi)?;
                let est = quadrature::integrate(|u| 1.0 / (c.eval)(u), lo, hi, QUADRATURE_TOL * 1e-3, 1e-13);
                if est.converged {
                    Ok(est.value)
                } else {
                    Err(WeightError::ToleranceNotAchievable { name: c.name.clone(), t: lo, tol: QUADRATURE_TOL })
                }
            }
        }
    }

    /// Strong iff `I(1) < inf`; the rho condition is searched only in the strong regime.
    pub fn classify_regime(&self) -> RegimeReport {
        let tail = self.tail_integral(1.0).unwrap_or(f64::INFINITY);
        if !tail.is_finite() {
            return RegimeReport { regime: Regime::Weak, tail_integral_at_1: f64::INFINITY, rho_condition: None };
        }
        let rho_condition = match &self.kind {
            WeightKind::Power { exponent } => Some(self.check_rho((exponent - 1.0) / exponent)),
            WeightKind::ExpShifted { .. } => Some(self.check_rho(1.0)),
            WeightKind::Custom(_) => {
                let mut best: Option<RhoCondition> = None;
                for k in 0..=20 {
                    let rc = self.check_rho(0.5f64.powi(k));
                    if rc.verified {
                        best = Some(rc);
                        break;
                    }
                    if best.as_ref().is_none_or(|b| rc.grid_max_violation < b.grid_max_violation) {
                        best = Some(rc);
                    }
                }
                best
            }
            WeightKind::Linear => None,
        };
        RegimeReport { regime: Regime::Strong, tail_integral_at_1: tail, rho_condition }
    }

    /// Grid check that `t -> w(t)^rho I(t)` is non-increasing.
    pub fn check_rho(&self, rho: f64) -> RhoCondition {
        let grid = rho_grid();
        let mut values = Vec::with_capacity(grid.len());
        for &t in &grid {
            match (self.eval(t), self.tail_integral(t)) {
                (Ok(w), Ok(i)) if i.is_finite() => values.push(w.powf(rho) * i),
                _ => return RhoCondition { rho, verified: false, grid_max_violation: f64::INFINITY },
            }
        }
        let scale = values[0].abs().max(f64::MIN_POSITIVE);
        let violation = values.windows(2).map(|p| ((p[1] - p[0]) / scale).max(0.0)).fold(0.0, f64::max);
        RhoCondition { rho, verified: violation <= RHO_GRID_TOL, grid_max_violation: violation }
    }
}

fn rho_grid() -> Vec<f64> {
    let mut grid: Vec<f64> = (0..=98).map(|k| 1.0 + 0.5 * k as f64).collect();
    let mut t = 50.0;
    while t < 1e6 {
        t *= 1.5;
        grid.push(t);
    }
    grid
}

fn power_tail(t: f64, exponent: f64) -> f64 {
    if exponent <= 1.0 {
        f64::INFINITY
    } else if exponent == 2.0 {
        1.0 / t
    } else {
        t.powf(1.0 - exponent) / (exponent - 1.0)
    }
}

fn check_custom(c: &CustomWeight, t: f64) -> Result<f64, WeightError> {
    let v = (c.eval)(t);
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(WeightError::Evaluator { name: c.name.clone(), t, value: v })
    }
}

/// Dyadic-block tail integration with a monotone upper bound on the remainder.
///
/// Block `[T, 2T]` contributes at most `T / w(T)^q` because `w` is increasing.
/// Integration stops once the next block bound, continued geometrically at the
/// observed decay ratio, falls below the tolerance.
fn custom_tail(c: &CustomWeight, t: f64, q: f64) -> Result<f64, WeightError> {
    const MAX_BLOCKS: usize = 1000;
    let inv = |u: f64| (c.eval)(u).powf(-q);
    let bound = |start: f64| -> Result<f64, WeightError> { Ok(start * check_custom(c, start)?.powf(-q)) };

    let mut total = 0.0;
    let mut start = t;
    let mut prev_bound = bound(start)?;
    for _ in 0..MAX_BLOCKS {
        let end = 2.0 * start;
        let est = quadrature::integrate(inv, start, end, QUADRATURE_TOL * 1e-3, 1e-13);
        if !est.converged {
            break;
        }
        total += est.value;
        start = end;
        let next_bound = bound(start)?;
        let ratio = next_bound / prev_bound;
        prev_bound = next_bound;
        if ratio < 1.0 {
            let remainder = next_bound / (1.0 - ratio);
            if remainder <= QUADRATURE_TOL * total.min(1.0) {
                return Ok(total);
            }
        }
        if !start.is_finite() {
            break;
        }
    }
    Err(WeightError::ToleranceNotAchievable { name: c.name.clone(), t, tol: QUADRATURE_TOL })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn eval_examples() {
        let p2 = WeightFunction::power(2.0).unwrap();
        assert_eq!(p2.eval(1.0).unwrap(), 1.0);
        assert_eq!(p2.eval(3.0).unwrap(), 9.0);
        let e = WeightFunction::exp_shifted(0.5).unwrap();
        assert!((e.eval(3.0).unwrap() - std::f64::consts::E).abs() < 1e-15);
        assert!(matches!(p2.eval(0.5), Err(WeightError::Domain { .. })));
    }

    #[test]
    fn tail_examples() {
        let p2 = WeightFunction::power(2.0).unwrap();
        assert_eq!(p2.tail_integral(2.0).unwrap(), 0.5);
        assert!(WeightFunction::linear().tail_integral(1.0).unwrap().is_infinite());
        assert!(WeightFunction::power(1.0).unwrap().tail_integral(1.0).unwrap().is_infinite());
        assert!(WeightFunction::power(0.5).unwrap().tail_integral(3.0).unwrap().is_infinite());
        assert!(matches!(p2.tail_integral(0.9), Err(WeightError::Domain { .. })));
    }

    #[test]
    fn power_three_tail_matches_trapezoid_oracle() {
        // Trapezoid on [1.5, 1e6] with geometric spacing plus the analytic tail beyond 1e6.
        let n = 2_000_000;
        let (lo, hi): (f64, f64) = (1.5, 1e6);
        let ratio = (hi / lo).ln() / n as f64;
        let f = |u: f64| 1.0 / (u * u * u);
        let mut acc = 0.0;
        let mut prev_u = lo;
        for k in 1..=n {
            let u = lo * (ratio * k as f64).exp();
            acc += 0.5 * (f(prev_u) + f(u)) * (u - prev_u);
            prev_u = u;
        }
        acc += hi.powi(-2) / 2.0;
        let closed = WeightFunction::power(3.0).unwrap().tail_integral(1.5).unwrap();
        assert!(rel(closed, 1.5f64.powi(-2) / 2.0) < 1e-15);
        assert!(rel(acc, 0.222_222_222_222_222_2) < 1e-9, "oracle {acc}");
        assert!(rel(closed, acc) < 1e-9);
    }

    #[test]
    fn regime_examples() {
        let lin = WeightFunction::linear().classify_regime();
        assert_eq!(lin.regime, Regime::Weak);
        assert!(lin.tail_integral_at_1.is_infinite());
        assert!(lin.rho_condition.is_none());

        let p2 = WeightFunction::power(2.0).unwrap().classify_regime();
        assert_eq!(p2.regime, Regime::Strong);
        assert_eq!(p2.tail_integral_at_1, 1.0);
        let rc = p2.rho_condition.unwrap();
        assert_eq!(rc.rho, 0.5);
        assert!(rc.verified);

        let e1 = WeightFunction::exp_shifted(1.0).unwrap().classify_regime();
        assert_eq!(e1.regime, Regime::Strong);
        assert!(rel(e1.tail_integral_at_1, 1.0) < 1e-15);
        let rc = e1.rho_condition.unwrap();
        assert_eq!(rc.rho, 1.0);
        assert!(rc.verified);
    }

    #[test]
    fn exp_shifted_rho_product_is_constant_on_grid() {
        // w(t) I(t) = 1/a on t in {1, 1.5, ..., 50}
        let w = WeightFunction::exp_shifted(1.0).unwrap();
        for k in 0..=98 {
            let t = 1.0 + 0.5 * k as f64;
            let g = w.eval(t).unwrap() * w.tail_integral(t).unwrap();
            assert!(rel(g, 1.0) < 1e-12, "t={t} g={g}");
        }
    }

    #[test]
    fn builtins_strictly_increasing_on_grid() {
        let ws = [
            WeightFunction::linear(),
            WeightFunction::power(0.5).unwrap(),
            WeightFunction::power(2.0).unwrap(),
            WeightFunction::power(3.7).unwrap(),
            WeightFunction::exp_shifted(0.3).unwrap(),
        ];
        for w in &ws {
            for k in 0..1000 {
                let t = 1.0 + 0.099 * k as f64;
                let eps = 1e-6 * t;
                assert!(w.eval(t + eps).unwrap() > w.eval(t).unwrap(), "{} at {t}", w.name());
                assert!(w.eval(t).unwrap() >= 1.0);
            }
        }
    }

    fn power_as_custom(a: f64) -> WeightFunction {
        WeightFunction::custom(CustomWeight::new(format!("custom-power-{a}"), a > 1.0, move |t: f64| t.powf(a)))
    }

    #[test]
    fn custom_quadrature_matches_closed_form() {
        for &a in &[1.5, 2.0, 3.0] {
            let closed = WeightFunction::power(a).unwrap();
            let quad = power_as_custom(a);
            for &t in &[1.0, 1.5, 2.0, 7.5, 40.0, 100.0] {
                let c = closed.tail_integral(t).unwrap();
                let q = quad.tail_integral(t).unwrap();
                assert!(rel(q, c) < 1e-9, "a={a} t={t}: {q} vs {c}");
            }
        }
        let e = WeightFunction::exp_shifted(0.7).unwrap();
        let ec = WeightFunction::custom(CustomWeight::new("custom-exp", true, |t: f64| (0.7 * (t - 1.0)).exp()));
        for &t in &[1.0, 3.0, 12.0] {
            assert!(rel(ec.tail_integral(t).unwrap(), e.tail_integral(t).unwrap()) < 1e-9);
        }
    }

    #[test]
    fn custom_regime_search() {
        let strong = power_as_custom(2.0).classify_regime();
        assert_eq!(strong.regime, Regime::Strong);
        let rc = strong.rho_condition.unwrap();
        assert!(rc.verified);
        assert!(rc.rho <= 0.5);

        let weak = WeightFunction::custom(CustomWeight::new("sqrt", false, f64::sqrt)).classify_regime();
        assert_eq!(weak.regime, Regime::Weak);
    }

    #[test]
    fn custom_evaluator_failure_is_reported() {
        let bad = WeightFunction::custom(CustomWeight::new("bad", true, |t: f64| if t > 2.0 { f64::NAN } else { t }));
        assert!(matches!(bad.eval(3.0), Err(WeightError::Evaluator { .. })));
        assert!(bad.tail_integral(1.0).is_err());
    }

    #[test]
    fn slowly_converging_custom_tail_is_refused() {
        // Tail bound T^{-0.001} cannot reach 1e-10 within the block budget.
        let w = WeightFunction::custom(CustomWeight::new("barely", true, |t: f64| t.powf(1.001)));
        assert!(matches!(w.tail_integral(1.0), Err(WeightError::ToleranceNotAchievable { .. })));
    }

    #[test]
    fn power_rho_product_constant() {
        for &a in &[1.5, 2.0, 2.5, 4.0] {
            let w = WeightFunction::power(a).unwrap();
            let rho = (a - 1.0) / a;
            let g0 = w.eval(1.0).unwrap().powf(rho) * w.tail_integral(1.0).unwrap();
            for k in 0..200 {
                let t = 1.0 + 0.5 * k as f64;
                let g = w.eval(t).unwrap().powf(rho) * w.tail_integral(t).unwrap();
                assert!(rel(g, g0) < 1e-12, "a={a} t={t}");
            }
        }
    }

    #[test]
    fn spec_roundtrip_and_validation() {
        let s: WeightSpec = serde_json::from_str(r#"{"kind":"power","a":2}"#).unwrap();
        assert_eq!(s, WeightSpec::Power { a: 2.0 });
        let e: WeightSpec = serde_json::from_str(r#"{"kind":"exp_shifted","a":1.0}"#).unwrap();
        assert_eq!(e, WeightSpec::ExpShifted { a: 1.0 });
        let bad = WeightSpec::Power { a: -1.0 };
        assert_eq!(bad.problems(), vec!["weight.a: exponent must be > 0 (got -1)".to_string()]);
        assert!(WeightFunction::from_spec(&bad).is_err());
    }
}
