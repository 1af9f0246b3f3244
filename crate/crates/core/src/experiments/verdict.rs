use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::config::{hex, ExperimentConfig};

/// How a check's statistic is compared with its threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    AtLeast,
    AtMost,
    Below,
    Above,
}

impl Comparison {
    pub fn holds(self, statistic: f64, threshold: f64) -> bool {
        match self {
            Comparison::AtLeast => statistic >= threshold,
            Comparison::AtMost => statistic <= threshold,
            Comparison::Below => statistic < threshold,
            Comparison::Above => statistic > threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub comparison: Comparison,
    pub pass: bool,
    /// Report-only checks do not enter the verdict.
    pub gating: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<[f64; 2]>,
}

impl Check {
    pub fn new(name: impl Into<String>, statistic: f64, comparison: Comparison, threshold: f64) -> Self {
        Self {
            name: name.into(),
            statistic,
            threshold,
            comparison,
            pass: comparison.holds(statistic, threshold),
            gating: true,
            ci: None,
        }
    }

    pub fn report_only(mut self) -> Self {
        self.gating = false;
        self
    }

    pub fn with_ci(mut self, ci: (f64, f64)) -> Self {
        self.ci = Some([ci.0, ci.1]);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictProvenance {
    pub seed: u64,
    pub config_digest: String,
    pub code_version: String,
}

/// Outcome of one replica as stored in a verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRecord {
    pub index: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub data: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub experiment: String,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub n_replicas: usize,
    pub failed_replicas: usize,
    /// Statistic and threshold of the first gating check.
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
    pub checks: Vec<Check>,
    /// Ensemble summaries that are not pass/fail checks.
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub details: Value,
    pub replicas: Vec<ReplicaRecord>,
    pub provenance: VerdictProvenance,
    /// Seconds since the Unix epoch; excluded from the digest.
    pub timestamp: String,
    pub digest: String,
}

impl Verdict {
    pub fn assemble(
        config: &ExperimentConfig,
        checks: Vec<Check>,
        details: Value,
        replicas: Vec<ReplicaRecord>,
    ) -> Self {
        let head = checks.iter().find(|c| c.gating).or(checks.first());
        let pass = checks.iter().filter(|c| c.gating).all(|c| c.pass);
        let timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs().to_string())
            .unwrap_or_default();
        let mut v = Verdict {
            experiment: config.experiment.name().to_string(),
            config: config.clone(),
            seed: config.seed,
            n_replicas: replicas.len(),
            failed_replicas: replicas.iter().filter(|r| r.error.is_some()).count(),
            statistic: head.map_or(f64::NAN, |c| c.statistic),
            threshold: head.map_or(f64::NAN, |c| c.threshold),
            pass,
            checks,
            details,
            replicas,
            provenance: VerdictProvenance {
                seed: config.seed,
                config_digest: config.digest(),
                code_version: env!("CARGO_PKG_VERSION").to_string(),
            },
            timestamp,
            digest: String::new(),
        };
        v.digest = v.compute_digest();
        v
    }

    /// SHA-256 of the JSON form without the timestamp and digest fields.
    pub fn compute_digest(&self) -> String {
        let mut value = serde_json::to_value(self).expect("verdict serializes");
        if let Value::Object(map) = &mut value {
            map.remove("timestamp");
            map.remove("digest");
        }
        hex(&Sha256::digest(serde_json::to_vec(&value).expect("value serializes")))
    }

    pub fn gating_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.gating)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Replica table with one column per scalar field of the replica data.
    /// Nested fields are joined with dots and array entries indexed.
    pub fn replicas_csv(&self) -> String {
        let mut columns: Vec<String> = Vec::new();
        let rows: Vec<Vec<(String, String)>> = self
            .replicas
            .iter()
            .map(|r| {
                let mut cells =
                    vec![("index".to_string(), r.index.to_string()), ("seed".to_string(), r.seed.to_string())];
                cells.push(("error".to_string(), r.error.clone().unwrap_or_default().replace([',', '\n'], ";")));
                flatten("", &r.data, &mut cells);
                cells
            })
            .collect();
        for row in &rows {
            for (k, _) in row {
                if !columns.contains(k) {
                    columns.push(k.clone());
                }
            }
        }
        let mut out = columns.join(",");
        out.push('\n');
        for row in rows {
            let line: Vec<String> = columns
                .iter()
                .map(|c| row.iter().find(|(k, _)| k == c).map(|(_, v)| v.clone()).unwrap_or_default())
                .collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                flatten(&key(k), v, out);
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                flatten(&key(&i.to_string()), v, out);
            }
        }
        Value::Null => {}
        Value::String(s) => out.push((prefix.to_string(), s.replace([',', '\n'], ";"))),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}
