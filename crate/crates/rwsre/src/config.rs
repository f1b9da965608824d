//! Scenario configuration files.

use std::path::{Path, PathBuf};

use rwsre_core::environment::ModelSpec;
use rwsre_core::limitlaw::ThetaMethod;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::regime::{self, RegimeError, RegimeInfo};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Scenario {
    EngineEquivalence,
    Theorem1,
    Theorem2,
    Theorem3,
    Theorem4,
    LlnSpeed,
    TailLemmas,
    Negligibility,
    LimitLawSelftest,
}

impl Scenario {
    pub fn tag(self) -> &'static str {
        match self {
            Scenario::EngineEquivalence => "engine_equivalence",
            Scenario::Theorem1 => "theorem1",
            Scenario::Theorem2 => "theorem2",
            Scenario::Theorem3 => "theorem3",
            Scenario::Theorem4 => "theorem4",
            Scenario::LlnSpeed => "lln_speed",
            Scenario::TailLemmas => "tail_lemmas",
            Scenario::Negligibility => "negligibility",
            Scenario::LimitLawSelftest => "limit_law_selftest",
        }
    }
}

/// How `T_n` replicas are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineChoice {
    /// Direct walk for `n <= 64`, branching otherwise.
    #[default]
    Auto,
    Direct,
    Branching,
}

/// Largest target site simulated directly under [`EngineChoice::Auto`].
pub const DIRECT_MAX_N: i64 = 64;

/// Overrides for constants that are otherwise derived or estimated.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constants {
    pub c_z: Option<f64>,
    pub c_mu: Option<f64>,
    pub eps: Option<f64>,
    pub theta_method: Option<ThetaMethod>,
}

/// Pass thresholds; unset entries take scenario defaults.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// KS distance to the reference at the largest `n`.
    pub ks: Option<f64>,
    /// KS distance between consecutive grid points.
    pub cauchy: Option<f64>,
    /// Allowed increase of KS between consecutive grid points.
    pub trend_slack: Option<f64>,
    /// Relative tolerance for tail indices.
    pub hill_rel: Option<f64>,
    /// Relative tolerance for ratio plateaus and speeds.
    pub ratio_rel: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub model: ModelSpec,
    #[serde(default)]
    pub n_grid: Vec<i64>,
    pub replicas: u64,
    pub master_seed: u64,
    /// Worker threads; `0` uses every available core.
    #[serde(default)]
    pub threads: usize,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub constants: Constants,
    #[serde(default)]
    pub engine: EngineChoice,
    /// Censoring level for `T_n`; `None` leaves the branching engine uncapped.
    #[serde(default)]
    pub step_cap: Option<u64>,
    /// Size of the limit sample; defaults to `replicas`.
    #[serde(default)]
    pub limit_draws: Option<u64>,
    /// Extinction blocks used for tail estimates.
    #[serde(default)]
    pub blocks: Option<u64>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Default number of extinction blocks for tail estimates.
pub const DEFAULT_BLOCKS: u64 = 100_000;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("invalid model: {0}")]
    Model(#[from] rwsre_core::environment::EnvError),
    #[error(transparent)]
    Regime(#[from] RegimeError),
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn limit_draws(&self) -> u64 {
        self.limit_draws.unwrap_or(self.replicas)
    }

    pub fn blocks(&self) -> u64 {
        self.blocks.unwrap_or(DEFAULT_BLOCKS)
    }

    /// Structural checks plus the regime hypotheses of the chosen scenario.
    pub fn validate(&self) -> Result<Option<RegimeInfo>, ConfigError> {
        if self.replicas == 0 {
            return Err(ConfigError::Invalid("replicas must be at least 1".into()));
        }
        if self.n_grid.iter().any(|&n| n < 1) {
            return Err(ConfigError::Invalid("n_grid entries must be positive".into()));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ConfigError::Invalid("n_grid must be strictly ascending".into()));
        }
        if self.limit_draws == Some(0) || self.blocks == Some(0) {
            return Err(ConfigError::Invalid("limit_draws and blocks must be positive".into()));
        }
        if let Some(cap) = self.step_cap {
            if self.n_grid.last().is_some_and(|&n| cap <= n as u64) {
                return Err(ConfigError::Invalid(format!(
                    "step_cap {cap} does not exceed the largest target site"
                )));
            }
        }
        let needs_grid = !matches!(
            self.scenario,
            Scenario::TailLemmas | Scenario::LimitLawSelftest
        );
        if needs_grid && self.n_grid.is_empty() {
            return Err(ConfigError::Invalid(format!(
                "{} needs a nonempty n_grid",
                self.scenario.tag()
            )));
        }
        self.model.validate()?;
        let info = match self.scenario {
            Scenario::Theorem1 => Some(regime::check_quadratic(&self.model, "theorem1", false)?),
            Scenario::Theorem2 => Some(regime::check_trap(&self.model, "theorem2", false)?),
            Scenario::Theorem3 => Some(regime::check_quadratic(&self.model, "theorem3", true)?),
            Scenario::Theorem4 => Some(regime::check_trap(&self.model, "theorem4", true)?),
            Scenario::TailLemmas | Scenario::Negligibility => Some(regime::classify(&self.model)?),
            _ => None,
        };
        Ok(info)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const THEOREM1: &str = r#"
scenario = "theorem1"
n_grid = [1024, 4096]
replicas = 100
master_seed = 7

[model]
beta = 0.5

[model.xi]
family = "pareto"
slowly = { kind = "const", c = 1.0 }

[model.lambda]
family = "constant"
value = 0.6666666666666666
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ScenarioConfig::from_toml(THEOREM1).unwrap();
        assert_eq!(cfg.scenario, Scenario::Theorem1);
        assert_eq!(cfg.threads, 0);
        assert_eq!(cfg.out_dir, PathBuf::from("out"));
        assert!(cfg.validate().unwrap().is_some());
        let back = ScenarioConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_unsorted_grid_and_zero_replicas() {
        let mut cfg = ScenarioConfig::from_toml(THEOREM1).unwrap();
        cfg.n_grid = vec![4096, 1024];
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid(_))));
        cfg.n_grid = vec![1024];
        cfg.replicas = 0;
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = format!("{THEOREM1}\n[constants]\nc_q = 1.0\n");
        assert!(ScenarioConfig::from_toml(&text).is_err());
    }

    #[test]
    fn theorem1_refuses_trap_regime() {
        let text = THEOREM1.replace(
            "family = \"constant\"\nvalue = 0.6666666666666666",
            "family = \"two_point\"\nvalues = [0.3333333333333333, 0.75]\np_first = 0.59",
        );
        let cfg = ScenarioConfig::from_toml(&text).unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("theorem1 requires E rho^(beta/2) < 1"), "{err}");
    }
}
