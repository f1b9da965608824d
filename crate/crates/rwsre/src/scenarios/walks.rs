//! Scenarios driven by single walks: engine agreement, speed and the quenched correction.

use rwsre_core::branching::{quenched_mean_y, sample_y};
use rwsre_core::environment::classify_and_speed;
use rwsre_core::stats::{ks_distance, mean, median, std_err, EcdfSummary, MetricSummary};
use rwsre_core::walk::{run_walk, WalkOptions};

use super::{hitting_times, Ctx, Engine, ScenarioError};
use crate::result::{Check, EcdfPair, PerN, RunResult, RunRow};

/// Censoring level when comparing engines without a configured cap.
pub const EQUIVALENCE_CAP: u64 = 20_000;
/// Fixed environments in the quenched mean check.
pub const QUENCHED_ENVS: u64 = 3;
/// Standard errors allowed between the quenched Monte Carlo mean and its closed form.
const QUENCHED_SE: f64 = 3.0;

fn env_window(ctx: &Ctx, res: &mut RunResult, n: i64) {
    let mut env = ctx.env("env", n as u64, 0);
    env.ensure_site(n);
    res.env_rows = env.rows(0, env.mark_floor(n) + 1);
}

pub(super) fn engine_equivalence(ctx: &Ctx) -> Result<RunResult, ScenarioError> {
    let cfg = ctx.cfg;
    let cap = cfg.step_cap.unwrap_or(EQUIVALENCE_CAP);
    let ks_tol = cfg.tolerances.ks.unwrap_or(0.01);
    let mut res = RunResult::new(cfg.scenario.tag(), "t_n");
    res.verdict.param("step_cap", cap);
    for &n in &cfg.n_grid {
        let direct = hitting_times(ctx, n, Engine::Direct, Some(cap));
        let branching = hitting_times(ctx, n, Engine::Branching, Some(cap));
        let violations = direct.iter().filter(|d| !d.identity_holds(n)).count();
        let dv: Vec<f64> = direct.iter().map(|d| d.value()).collect();
        let bv: Vec<f64> = branching.iter().map(|d| d.value()).collect();
        let ks = ks_distance(&EcdfSummary::new(dv.clone()), &EcdfSummary::new(bv.clone()));
        for (engine, draws) in [(Engine::Direct, &direct), (Engine::Branching, &branching)] {
            for (r, d) in draws.iter().enumerate() {
                res.runs.push(RunRow {
                    engine: engine.name(),
                    n,
                    replica: r as u64,
                    raw: d.t.map(|t| t as i128),
                    capped: d.t.is_none(),
                    normalized: d.value() / n as f64,
                });
            }
        }
        let mut p = PerN::new(n);
        p.ks = Some(ks);
        p.extra.insert("identity_violations".into(), violations as f64);
        p.extra
            .insert("capped_direct".into(), direct.iter().filter(|d| d.t.is_none()).count() as f64);
        p.extra.insert(
            "capped_branching".into(),
            branching.iter().filter(|d| d.t.is_none()).count() as f64,
        );
        res.verdict.per_n.push(p);
        res.verdict.checks.push(Check::at_most(format!("ks_n{n}"), ks, ks_tol));
        res.verdict
            .checks
            .push(Check::at_most(format!("identity_violations_n{n}"), violations as f64, 0.0));
        res.pairs.push(EcdfPair {
            label: format!("n{n}"),
            empirical: dv,
            reference: bv,
        });
        if res.env_rows.is_empty() {
            env_window(ctx, &mut res, n);
        }
    }
    Ok(res)
}

pub(super) fn lln_speed(ctx: &Ctx) -> Result<RunResult, ScenarioError> {
    let cfg = ctx.cfg;
    let (class, v, moments) = classify_and_speed(&cfg.model);
    let rel = cfg.tolerances.ratio_rel.unwrap_or(0.02);
    let mut res = RunResult::new(cfg.scenario.tag(), "x_n");
    res.verdict.param("sparsity", class);
    res.verdict.param("moments", moments);
    res.verdict.param("speed", v);
    for &n in &cfg.n_grid {
        let un = n as u64;
        let opts = WalkOptions {
            cap: un,
            checkpoints: vec![un],
            record_path: false,
        };
        let xs: Vec<i64> = ctx.runner.map(cfg.replicas, |r| {
            let mut env = ctx.env("env", un, r);
            let mut rng = ctx.rng("walk", un, r);
            let w = run_walk(&mut env, n + 1, &opts, &mut rng);
            w.x_at[0].1
        });
        let ratios: Vec<f64> = xs.iter().map(|&x| x as f64 / n as f64).collect();
        for (r, (&x, &q)) in xs.iter().zip(&ratios).enumerate() {
            res.runs.push(RunRow {
                engine: Engine::Direct.name(),
                n,
                replica: r as u64,
                raw: Some(i128::from(x)),
                capped: false,
                normalized: q,
            });
        }
        let m = mean(&ratios);
        let se = std_err(&ratios);
        let mut p = PerN::new(n);
        p.extra.insert("mean_speed".into(), m);
        p.extra.insert("std_err".into(), se);
        res.verdict.per_n.push(p);
        res.verdict.metrics.push(
            MetricSummary::new("mean_speed", m, ratios.len())
                .with_ci(m - 1.96 * se, m + 1.96 * se)
                .param("n", n as f64),
        );
        res.verdict
            .checks
            .push(Check::within(format!("speed_n{n}"), m, v * (1.0 - rel), v * (1.0 + rel)));
        if res.env_rows.is_empty() {
            env_window(ctx, &mut res, n);
        }
    }
    Ok(res)
}

pub(super) fn negligibility(ctx: &Ctx) -> Result<RunResult, ScenarioError> {
    let cfg = ctx.cfg;
    let mut res = RunResult::new(cfg.scenario.tag(), "y_n");
    let mut medians = Vec::new();
    for &n in &cfg.n_grid {
        let un = n as u64;
        let ys: Vec<u128> = ctx.runner.map(cfg.replicas, |r| {
            let mut env = ctx.env("env", un, r);
            sample_y(&mut env, n, &mut ctx.rng("y", un, r))
        });
        let n2 = (n as f64) * (n as f64);
        let scaled: Vec<f64> = ys.iter().map(|&y| y as f64 / n2).collect();
        for (r, (&y, &q)) in ys.iter().zip(&scaled).enumerate() {
            res.runs.push(RunRow {
                engine: Engine::Branching.name(),
                n,
                replica: r as u64,
                raw: i128::try_from(y).ok(),
                capped: false,
                normalized: q,
            });
        }
        let med = median(&scaled);
        let mut p = PerN::new(n);
        p.extra.insert("median_scaled".into(), med);
        res.verdict.per_n.push(p);
        medians.push(med);
        if res.env_rows.is_empty() {
            env_window(ctx, &mut res, n);
        }
    }
    if medians.len() > 1 {
        let first = medians[0];
        let last = *medians.last().unwrap();
        let drop = if last > 0.0 { first / last } else { f64::INFINITY };
        res.verdict.checks.push(Check::at_least("median_drop", drop, 2.0));
    }

    let n0 = cfg.n_grid[0];
    let mut candidate = 0;
    for e in 0..QUENCHED_ENVS {
        // environments where n0 sits on a mark have Y = 0 and test nothing
        let (mut env, exact) = loop {
            let mut env = ctx.env("quenched-env", n0 as u64, candidate);
            candidate += 1;
            let exact = quenched_mean_y(&mut env, n0);
            if exact > 0.0 || candidate > 64 {
                break (env, exact);
            }
        };
        env.ensure_site(n0);
        let role = format!("quenched{e}");
        let ys: Vec<f64> = ctx.runner.map(cfg.replicas, |r| {
            let mut local = env.clone();
            sample_y(&mut local, n0, &mut ctx.rng(&role, n0 as u64, r)) as f64
        });
        let m = mean(&ys);
        let se = std_err(&ys);
        res.verdict.metrics.push(
            MetricSummary::new(&format!("quenched_mean_env{e}"), m, ys.len())
                .with_ci(m - QUENCHED_SE * se, m + QUENCHED_SE * se)
                .param("closed_form", exact)
                .param("n", n0 as f64),
        );
        // gap in standard errors; an exact match passes even with zero spread
        let gap = (m - exact).abs();
        let z = if gap == 0.0 { 0.0 } else { gap / se };
        let c = Check::at_most(format!("quenched_env{e}_se"), z, QUENCHED_SE);
        res.verdict.checks.push(c);
    }
    Ok(res)
}
