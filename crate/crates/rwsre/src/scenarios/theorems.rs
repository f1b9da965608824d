//! Distributional limits of the normalized hitting time.

use rand_xoshiro::Xoshiro256PlusPlus;
use rwsre_core::environment::ModelSpec;
use rwsre_core::heavytail::{build_normalizers, default_grid, TailFunctions};
use rwsre_core::limitlaw::{
    sample_indep_limit, sample_l2_at_1, theta_moment, LevyPair, ThetaSampler, DEFAULT_EPS,
};
use rwsre_core::stats::{ks_distance, EcdfSummary, MetricSummary};

use super::{blocks, fill_hill, hill_of, hitting_times, Ctx, Engine, ScenarioError};
use crate::config::Scenario;
use crate::regime::{Regime, RegimeInfo};
use crate::result::{Check, EcdfPair, LimitDraws, PerN, RunResult, RunRow};

/// Grid points above which the conjugate identity is checked.
const CONJUGATE_FROM: f64 = 1e3;
/// Grid points above which the inverse of the quadratic scale is checked.
const INVERSE_FROM: f64 = 1e4;
/// Largest identity defect accepted in the normalizer table.
const TABLE_DEFECT: f64 = 0.05;

type LimitFn = Box<dyn Fn(&mut Xoshiro256PlusPlus) -> f64 + Sync + Send>;
type ScaleFn = Box<dyn Fn(f64) -> f64>;

/// Tail constant of the trap component: configured or estimated from extinction blocks.
fn c_z(ctx: &Ctx, alpha: f64, res: &mut RunResult) -> Result<f64, ScenarioError> {
    if let Some(c) = ctx.cfg.constants.c_z {
        return Ok(c);
    }
    let est = blocks::estimate_block_tails(ctx, "cz", ctx.cfg.blocks(), Some(alpha))?;
    let c = est.c_z.expect("exponent supplied");
    res.verdict.metrics.push(
        MetricSummary::new("c_z_estimate", c.plateau, est.count)
            .param("alpha", alpha)
            .param("e_tau", est.e_tau)
            .param("flatness", c.flatness),
    );
    Ok(c.plateau)
}

/// Tail constant of the second limit coordinate in the quadratic regimes.
fn c_mu(ctx: &Ctx, info: &RegimeInfo, res: &mut RunResult) -> Result<f64, ScenarioError> {
    if let Some(c) = ctx.cfg.constants.c_mu {
        return Ok(c);
    }
    let moment = theta_moment(info.beta / 2.0);
    Ok(match info.regime {
        Regime::BalancedConverging { limit } => limit * moment + c_z(ctx, info.beta / 2.0, res)?,
        _ => moment,
    })
}

fn model_alpha(info: &RegimeInfo) -> f64 {
    info.alpha.expect("trap regimes have a Cramer exponent")
}

pub(super) fn run(ctx: &Ctx, info: RegimeInfo) -> Result<RunResult, ScenarioError> {
    let cfg = ctx.cfg;
    let spec: ModelSpec = cfg.model;
    let beta = spec.beta;
    let tag = cfg.scenario.tag();
    let mut res = RunResult::new(tag, "t_n");
    let theta_method = cfg.constants.theta_method.unwrap_or_default();

    let (law, scale, limit, index): (&'static str, ScaleFn, LimitFn, f64) = match cfg.scenario {
        Scenario::Theorem1 => {
            let c = c_mu(ctx, &info, &mut res)?;
            let pair = LevyPair::new(beta, c, cfg.constants.eps.unwrap_or(DEFAULT_EPS))?;
            let theta = ThetaSampler::new(theta_method)?;
            res.verdict.param("c_mu", c);
            res.verdict.param("eps", pair.eps);
            (
                "two_chi",
                Box::new(|n| n * n),
                Box::new(move |rng| 2.0 * pair.sample_chi(&theta, rng)),
                beta / 2.0,
            )
        }
        Scenario::Theorem2 => {
            let alpha = model_alpha(&info);
            let c = c_z(ctx, alpha, &mut res)?;
            let tail = spec.pareto_tail().expect("regular variation checked");
            res.verdict.param("c_z", c);
            (
                "two_indep",
                Box::new(move |n| tail.survival(n).powf(-1.0 / alpha)),
                Box::new(move |rng| 2.0 * sample_indep_limit(alpha, beta, c, rng)),
                alpha,
            )
        }
        Scenario::Theorem3 => {
            let c = c_mu(ctx, &info, &mut res)?;
            let tf = TailFunctions::new(&spec, None)?;
            res.verdict.param("c_mu", c);
            res.normalizers = Some(build_normalizers(&spec, None, &default_grid())?);
            (
                "two_l2",
                Box::new(move |n| tf.scale_quadratic(n)),
                Box::new(move |rng| 2.0 * sample_l2_at_1(0.5, c, rng)),
                0.5,
            )
        }
        Scenario::Theorem4 => {
            let alpha = model_alpha(&info);
            let c = c_z(ctx, alpha, &mut res)?;
            let tf = TailFunctions::new(&spec, Some(alpha))?;
            res.verdict.param("c_z", c);
            res.normalizers = Some(build_normalizers(&spec, Some(alpha), &default_grid())?);
            (
                "two_l2",
                Box::new(move |n| tf.scale_alpha(n).expect("alpha supplied")),
                Box::new(move |rng| 2.0 * sample_l2_at_1(alpha, c, rng)),
                alpha,
            )
        }
        _ => unreachable!("not a theorem scenario"),
    };
    res.verdict.param("limit_tail_index", index);

    let limit_values = ctx
        .runner
        .map(cfg.limit_draws(), |i| limit(&mut ctx.rng("limit", 0, i)));
    let limit_ecdf = EcdfSummary::new(limit_values.clone());

    let mut previous: Option<EcdfSummary> = None;
    for &n in &cfg.n_grid {
        let engine = Engine::resolve(cfg.engine, n);
        let draws = hitting_times(ctx, n, engine, cfg.step_cap);
        let s = scale(n as f64);
        let normalized: Vec<f64> = draws.iter().map(|d| d.value() / s).collect();
        for (r, (d, x)) in draws.iter().zip(&normalized).enumerate() {
            res.runs.push(RunRow {
                engine: engine.name(),
                n,
                replica: r as u64,
                raw: d.t.map(|t| t as i128),
                capped: d.t.is_none(),
                normalized: *x,
            });
        }
        let ecdf = EcdfSummary::new(normalized.clone());
        let mut p = PerN::new(n);
        p.ks = Some(ks_distance(&ecdf, &limit_ecdf));
        p.extra.insert("scale".into(), s);
        p.extra
            .insert("capped".into(), draws.iter().filter(|d| d.t.is_none()).count() as f64);
        if let Some(prev) = &previous {
            p.extra.insert("cauchy".into(), ks_distance(prev, &ecdf));
        }
        fill_hill(&mut p, hill_of(&normalized, &mut ctx.rng("hill", n as u64, 0)));
        res.verdict.per_n.push(p);
        res.pairs.push(EcdfPair {
            label: format!("n{n}"),
            empirical: normalized,
            reference: limit_values.clone(),
        });
        previous = Some(ecdf);
        if res.env_rows.is_empty() {
            let mut env = ctx.env("env", n as u64, 0);
            env.ensure_site(n);
            res.env_rows = env.rows(0, env.mark_floor(n) + 1);
        }
    }
    res.limit = Some(LimitDraws {
        law,
        values: limit_values,
    });
    add_checks(ctx, &mut res, index);
    Ok(res)
}

fn add_checks(ctx: &Ctx, res: &mut RunResult, index: f64) {
    let tol = ctx.cfg.tolerances;
    let v = &mut res.verdict;
    let ks: Vec<f64> = v.per_n.iter().filter_map(|p| p.ks).collect();
    let last = v.per_n.last().expect("nonempty grid");
    match ctx.cfg.scenario {
        Scenario::Theorem1 => {
            let slack = tol.trend_slack.unwrap_or(0.01);
            v.checks.push(Check::at_most("ks_last", *ks.last().unwrap(), tol.ks.unwrap_or(0.08)));
            let worst = ks.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
            if ks.len() > 1 {
                v.checks.push(Check::at_most("ks_increase", worst, slack));
            }
        }
        Scenario::Theorem2 => {
            let rel = tol.hill_rel.unwrap_or(0.2);
            v.checks.push(Check::at_most("ks_last", *ks.last().unwrap(), tol.ks.unwrap_or(0.10)));
            let cauchy = v
                .per_n
                .iter()
                .filter_map(|p| p.get("cauchy"))
                .fold(f64::NEG_INFINITY, f64::max);
            if v.per_n.len() > 1 {
                v.checks.push(Check::at_most("cauchy_max", cauchy, tol.cauchy.unwrap_or(0.05)));
            }
            let hill = last.hill.unwrap_or(f64::NAN);
            v.checks.push(Check::within(
                "hill_last",
                hill,
                index * (1.0 - rel),
                index * (1.0 + rel),
            ));
        }
        Scenario::Theorem3 | Scenario::Theorem4 => {
            let slack = tol.trend_slack.unwrap_or(0.0);
            let worst = ks.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
            if ks.len() > 1 {
                let mut c = Check::at_most("ks_increase", worst, slack);
                if slack == 0.0 {
                    // strictly decreasing
                    c.pass = worst < 0.0;
                }
                v.checks.push(c);
            }
            if let Some(tab) = &res.normalizers {
                v.checks.push(Check::at_most(
                    "conjugate_defect",
                    tab.conjugate_defect(CONJUGATE_FROM),
                    TABLE_DEFECT,
                ));
                if ctx.cfg.scenario == Scenario::Theorem3 {
                    v.checks.push(Check::at_most(
                        "inverse_defect",
                        tab.inverse_defect(INVERSE_FROM),
                        TABLE_DEFECT,
                    ));
                }
            }
        }
        _ => {}
    }
}
