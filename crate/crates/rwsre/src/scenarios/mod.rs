//! Scenario implementations.

mod blocks;
mod selftest;
mod theorems;
mod walks;

pub use blocks::{estimate_block_tails, BlockTails};

use rand::Rng;
use rand_xoshiro::Xoshiro256PlusPlus;
use rwsre_core::branching::{hitting_time_branching, BranchingOptions};
use rwsre_core::environment::{EnvBlock, EnvError};
use rwsre_core::heavytail::HeavyTailError;
use rwsre_core::limitlaw::LimitError;
use rwsre_core::stats::{default_hill_k, hill_estimator, HillEstimate, StatsError};
use rwsre_core::walk::{run_walk, WalkOptions};
use thiserror::Error;

use crate::config::{ConfigError, EngineChoice, Scenario, ScenarioConfig, DIRECT_MAX_N};
use crate::result::{PerN, RunResult};
use crate::runner::Runner;
use crate::seeding::{env_seed, stream_rng};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Limit(#[from] LimitError),
    #[error(transparent)]
    HeavyTail(#[from] HeavyTailError),
    #[error("{context}: {source}")]
    Stats {
        context: String,
        source: StatsError,
    },
}

/// Step cap for direct walks when the config sets none.
pub const DEFAULT_DIRECT_CAP: u64 = 100_000_000;
/// Bootstrap resamples behind Hill intervals.
pub const HILL_BOOTSTRAP: usize = 200;

/// Shared state of one scenario run.
pub struct Ctx<'a> {
    pub cfg: &'a ScenarioConfig,
    pub runner: &'a Runner,
}

impl Ctx<'_> {
    fn tag(&self) -> &'static str {
        self.cfg.scenario.tag()
    }

    /// Stream for `(role, n, replica)` within this scenario.
    pub fn rng(&self, role: &str, n: u64, replica: u64) -> Xoshiro256PlusPlus {
        stream_rng(self.cfg.master_seed, &format!("{}/{role}", self.tag()), n, replica)
    }

    /// Fresh environment for `(role, n, replica)`.
    pub fn env(&self, role: &str, n: u64, replica: u64) -> EnvBlock {
        let seed = env_seed(self.cfg.master_seed, &format!("{}/{role}", self.tag()), n, replica);
        EnvBlock::new(self.cfg.model, seed).expect("model validated before running")
    }
}

/// Runs `cfg` after validating it.
pub fn run_scenario(cfg: &ScenarioConfig, runner: &Runner) -> Result<RunResult, ScenarioError> {
    let info = cfg.validate()?;
    let ctx = Ctx { cfg, runner };
    let mut res = match cfg.scenario {
        Scenario::EngineEquivalence => walks::engine_equivalence(&ctx)?,
        Scenario::Theorem1 | Scenario::Theorem2 | Scenario::Theorem3 | Scenario::Theorem4 => {
            theorems::run(&ctx, info.expect("theorem regimes are classified"))?
        }
        Scenario::LlnSpeed => walks::lln_speed(&ctx)?,
        Scenario::TailLemmas => blocks::tail_lemmas(&ctx, info.expect("classified"))?,
        Scenario::Negligibility => walks::negligibility(&ctx)?,
        Scenario::LimitLawSelftest => selftest::run(&ctx)?,
    };
    let v = &mut res.verdict;
    v.param("model", cfg.model);
    v.param("n_grid", &cfg.n_grid);
    v.param("replicas", cfg.replicas);
    v.param("master_seed", cfg.master_seed);
    if let Some(info) = info {
        v.param("regime", info);
    }
    v.settle();
    Ok(res)
}

/// Engine actually used for target `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Direct,
    Branching,
}

impl Engine {
    pub fn resolve(choice: EngineChoice, n: i64) -> Self {
        match choice {
            EngineChoice::Direct => Engine::Direct,
            EngineChoice::Branching => Engine::Branching,
            EngineChoice::Auto if n <= DIRECT_MAX_N => Engine::Direct,
            EngineChoice::Auto => Engine::Branching,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Engine::Direct => "direct",
            Engine::Branching => "branching",
        }
    }
}

/// One replica of `T_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HitDraw {
    /// `None` when censored.
    pub t: Option<u128>,
    /// Left steps of a direct walk.
    pub left_steps: Option<u64>,
}

impl HitDraw {
    pub fn value(&self) -> f64 {
        self.t.map_or(f64::INFINITY, |t| t as f64)
    }

    /// `T_n = n + 2 * left steps`; trivially true for branching draws.
    pub fn identity_holds(&self, n: i64) -> bool {
        match (self.t, self.left_steps) {
            (Some(t), Some(l)) => t == n as u128 + 2 * l as u128,
            _ => true,
        }
    }
}

/// `replicas` draws of `T_n`; replica `r` uses the environment `("env", n, r)`.
pub fn hitting_times(ctx: &Ctx, n: i64, engine: Engine, cap: Option<u64>) -> Vec<HitDraw> {
    let un = n as u64;
    match engine {
        Engine::Direct => {
            let opts = WalkOptions {
                cap: cap.unwrap_or(DEFAULT_DIRECT_CAP),
                ..Default::default()
            };
            ctx.runner.map(ctx.cfg.replicas, |r| {
                let mut env = ctx.env("env", un, r);
                let mut rng = ctx.rng("direct", un, r);
                let w = run_walk(&mut env, n, &opts, &mut rng);
                HitDraw {
                    t: w.t_n.map(u128::from),
                    left_steps: Some(w.left_steps),
                }
            })
        }
        Engine::Branching => {
            let opts = BranchingOptions {
                sum_cap: cap.map(|c| u128::from((c - un) / 2)),
                ..BranchingOptions::skipping()
            };
            ctx.runner.map(ctx.cfg.replicas, |r| {
                let mut env = ctx.env("env", un, r);
                let mut rng = ctx.rng("branching", un, r);
                let h = hitting_time_branching(&mut env, n, &opts, &mut rng);
                HitDraw {
                    t: h.t_n,
                    left_steps: None,
                }
            })
        }
    }
}

/// Hill estimate over the finite positive part of `values`, if there is enough of it.
pub fn hill_of<R: Rng + ?Sized>(values: &[f64], rng: &mut R) -> Option<HillEstimate> {
    let pos: Vec<f64> = values
        .iter()
        .copied()
        .filter(|x| *x > 0.0 && x.is_finite())
        .collect();
    let k = default_hill_k(pos.len());
    if k == 0 || 2 * k >= pos.len() {
        return None;
    }
    hill_estimator(&pos, Some(k), HILL_BOOTSTRAP, rng).ok()
}

pub(crate) fn fill_hill(p: &mut PerN, h: Option<HillEstimate>) {
    if let Some(h) = h {
        p.hill = Some(h.index);
        p.ci = Some([h.ci_low, h.ci_high]);
        p.extra.insert("hill_k".into(), h.k as f64);
    }
}

pub(crate) fn stats_err(context: &str) -> impl FnOnce(StatsError) -> ScenarioError + '_ {
    move |source| ScenarioError::Stats {
        context: context.to_string(),
        source,
    }
}
