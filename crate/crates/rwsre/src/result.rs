//! In-memory result of a scenario run.

use std::collections::BTreeMap;

use rwsre_core::branching::BlockRecord;
use rwsre_core::heavytail::NormalizerTable;
use rwsre_core::stats::MetricSummary;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerN {
    pub n: i64,
    pub ks: Option<f64>,
    pub hill: Option<f64>,
    pub ci: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, f64>,
}

impl PerN {
    pub fn new(n: i64) -> Self {
        PerN {
            n,
            ks: None,
            hill: None,
            ci: None,
            extra: BTreeMap::new(),
        }
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.extra.get(key).copied()
    }
}

/// A named quantity with its acceptance window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub pass: bool,
}

impl Check {
    pub fn within(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Check {
            name: name.into(),
            value,
            lo: Some(lo),
            hi: Some(hi),
            pass: value >= lo && value <= hi,
        }
    }

    pub fn at_most(name: impl Into<String>, value: f64, hi: f64) -> Self {
        Check {
            name: name.into(),
            value,
            lo: None,
            hi: Some(hi),
            pass: value <= hi,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, lo: f64) -> Self {
        Check {
            name: name.into(),
            value,
            lo: Some(lo),
            hi: None,
            pass: value >= lo,
        }
    }

    /// A yes/no condition reported as `1` or `0`.
    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Check {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            lo: Some(1.0),
            hi: None,
            pass: ok,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub scenario: String,
    pub params: BTreeMap<String, serde_json::Value>,
    pub per_n: Vec<PerN>,
    pub checks: Vec<Check>,
    pub metrics: Vec<MetricSummary>,
    pub pass: bool,
}

impl Verdict {
    pub fn new(scenario: &str) -> Self {
        Verdict {
            scenario: scenario.to_string(),
            params: BTreeMap::new(),
            per_n: Vec::new(),
            checks: Vec::new(),
            metrics: Vec::new(),
            pass: false,
        }
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) {
        self.params.insert(
            key.to_string(),
            serde_json::to_value(value).expect("param serializes"),
        );
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn metric(&self, name: &str) -> Option<&MetricSummary> {
        self.metrics.iter().find(|m| m.metric == name)
    }

    /// Sets `pass` from the checks; a run without checks fails.
    pub fn settle(&mut self) {
        self.pass = !self.checks.is_empty() && self.checks.iter().all(|c| c.pass);
    }
}

/// One replica of a per-`n` observable.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub engine: &'static str,
    pub n: i64,
    pub replica: u64,
    /// Raw observable; `None` when censored.
    pub raw: Option<i128>,
    pub capped: bool,
    pub normalized: f64,
}

/// Two samples compared through their ECDFs.
#[derive(Debug, Clone, PartialEq)]
pub struct EcdfPair {
    pub label: String,
    pub empirical: Vec<f64>,
    pub reference: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitDraws {
    pub law: &'static str,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockRow {
    pub replica: u64,
    pub k: u64,
    pub record: BlockRecord,
}

/// Environment window rows `(k, xi, lambda, S_k)`.
pub type EnvRow = (i64, u64, f64, i64);

#[derive(Debug, Clone)]
pub struct RunResult {
    pub verdict: Verdict,
    /// Header of the raw observable column in the runs file.
    pub raw_column: &'static str,
    pub runs: Vec<RunRow>,
    pub pairs: Vec<EcdfPair>,
    pub limit: Option<LimitDraws>,
    pub blocks: Vec<BlockRow>,
    pub env_rows: Vec<EnvRow>,
    pub normalizers: Option<NormalizerTable>,
}

impl RunResult {
    pub fn new(scenario: &str, raw_column: &'static str) -> Self {
        RunResult {
            verdict: Verdict::new(scenario),
            raw_column,
            runs: Vec::new(),
            pairs: Vec::new(),
            limit: None,
            blocks: Vec::new(),
            env_rows: Vec::new(),
            normalizers: None,
        }
    }
}
