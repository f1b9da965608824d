//! Extinction blocks of the forward branching process and their tails.

use rwsre_core::branching::{z_blocks, BlockRecord, BranchingOptions};
use rwsre_core::limitlaw::theta_moment;
use rwsre_core::stats::{
    mean, ratio_tail_estimate, std_err, upper_quantile_grid, EcdfSummary, MetricSummary, RatioTail,
};

use super::{hill_of, stats_err, Ctx, ScenarioError};
use crate::regime::RegimeInfo;
use crate::result::{BlockRow, Check, RunResult};

/// Blocks are simulated in this many independent environment streams.
pub const BLOCK_CHUNKS: u64 = 16;
/// Thresholds per ratio plateau.
const GRID_POINTS: usize = 12;
/// Largest exceedance fraction in a ratio grid.
const TOP_FRACTION: f64 = 0.05;
/// Smallest exceedance count in a ratio grid.
const MIN_EXCEED: usize = 100;

/// Block sample with the trap tail constant when an exponent is supplied.
#[derive(Debug, Clone)]
pub struct BlockTails {
    pub count: usize,
    pub e_tau: f64,
    pub e_tau_se: f64,
    /// `(chunk, index within chunk, record)`.
    pub records: Vec<(u64, u64, BlockRecord)>,
    pub c_z: Option<RatioTail>,
}

impl BlockTails {
    pub fn column(&self, f: impl Fn(&BlockRecord) -> f64) -> Vec<f64> {
        self.records.iter().map(|(_, _, r)| f(r)).collect()
    }
}

/// Simulates `count` blocks under streams `role`; with `alpha`, estimates the plateau of
/// `P{W > t} / (E tau t^-alpha)`.
pub fn estimate_block_tails(
    ctx: &Ctx,
    role: &str,
    count: u64,
    alpha: Option<f64>,
) -> Result<BlockTails, ScenarioError> {
    let env_role = format!("{role}-env");
    let per_chunk: Vec<u64> = (0..BLOCK_CHUNKS)
        .map(|c| count / BLOCK_CHUNKS + u64::from(c < count % BLOCK_CHUNKS))
        .collect();
    let chunks = ctx.runner.map(BLOCK_CHUNKS, |c| {
        let mut env = ctx.env(&env_role, 0, c);
        let mut rng = ctx.rng(role, 0, c);
        z_blocks(&mut env, i64::MAX as u64, BranchingOptions::skipping(), &mut rng)
            .take(per_chunk[c as usize] as usize)
            .collect::<Vec<_>>()
    });
    let records: Vec<(u64, u64, BlockRecord)> = chunks
        .into_iter()
        .enumerate()
        .flat_map(|(c, v)| v.into_iter().enumerate().map(move |(k, r)| (c as u64, k as u64, r)))
        .collect();
    let taus: Vec<f64> = records.iter().map(|(_, _, r)| r.tau_increment as f64).collect();
    let e_tau = mean(&taus);
    let mut out = BlockTails {
        count: records.len(),
        e_tau,
        e_tau_se: std_err(&taus),
        records,
        c_z: None,
    };
    if let Some(alpha) = alpha {
        let w = EcdfSummary::new(out.column(|r| r.w_bar as f64));
        let grid = upper_quantile_grid(&w, GRID_POINTS, TOP_FRACTION, MIN_EXCEED);
        let est = ratio_tail_estimate(&w, |t| e_tau * t.powf(-alpha), &grid)
            .map_err(stats_err("trap tail constant"))?;
        out.c_z = Some(est);
    }
    Ok(out)
}

pub(super) fn tail_lemmas(ctx: &Ctx, info: RegimeInfo) -> Result<RunResult, ScenarioError> {
    let spec = ctx.cfg.model;
    let tol = ctx.cfg.tolerances;
    let mut res = RunResult::new(ctx.cfg.scenario.tag(), "tau");
    let gap_dominated = info.half_beta_moment < 1.0;
    let alpha = info.alpha.filter(|_| !gap_dominated);
    let est = estimate_block_tails(ctx, "blocks", ctx.cfg.blocks(), alpha)?;
    let v = &mut res.verdict;
    v.metrics.push(
        MetricSummary::new("e_tau", est.e_tau, est.count)
            .with_ci(est.e_tau - 1.96 * est.e_tau_se, est.e_tau + 1.96 * est.e_tau_se),
    );

    let s = EcdfSummary::new(est.column(|r| r.s_increment as f64));
    let grid = upper_quantile_grid(&s, GRID_POINTS, TOP_FRACTION, MIN_EXCEED);
    let s_tail = ratio_tail_estimate(&s, |t| spec.xi_survival(t), &grid)
        .map_err(stats_err("block length tail"))?;
    let rel = tol.ratio_rel.unwrap_or(0.2);
    v.metrics
        .push(MetricSummary::new("s_tail_plateau", s_tail.plateau, est.count).param("flatness", s_tail.flatness));
    v.checks.push(Check::within(
        "s_tail_plateau",
        s_tail.plateau,
        est.e_tau * (1.0 - rel),
        est.e_tau * (1.0 + rel),
    ));

    let w = est.column(|r| r.w_bar as f64);
    let index = if gap_dominated {
        info.beta / 2.0
    } else {
        info.alpha.expect("balanced or trap regimes have a Cramer exponent")
    };
    v.param("expected_index", index);
    let hill = hill_of(&w, &mut ctx.rng("hill", 0, 0));
    let hill_rel = tol.hill_rel.unwrap_or(0.15);
    let h = hill.map_or(f64::NAN, |h| h.index);
    let mut m = MetricSummary::new("w_hill", h, est.count);
    if let Some(h) = hill {
        m = m.with_ci(h.ci_low, h.ci_high).param("k", h.k as f64);
    }
    v.metrics.push(m);
    v.checks.push(Check::within(
        "w_hill",
        h,
        index * (1.0 - hill_rel),
        index * (1.0 + hill_rel),
    ));

    if let Some(c) = &est.c_z {
        v.metrics.push(
            MetricSummary::new("c_z", c.plateau, est.count)
                .param("alpha", index)
                .param("flatness", c.flatness),
        );
    }
    if gap_dominated {
        // tail of W against E tau * E theta^(beta/2) * P{xi > sqrt t}
        let w_ecdf = EcdfSummary::new(w);
        let grid = upper_quantile_grid(&w_ecdf, GRID_POINTS, TOP_FRACTION, MIN_EXCEED);
        let k = est.e_tau * theta_moment(info.beta / 2.0);
        if let Ok(r) = ratio_tail_estimate(&w_ecdf, |t| k * spec.xi_survival(t.sqrt()), &grid) {
            v.metrics.push(
                MetricSummary::new("w_gap_ratio", r.plateau, est.count).param("flatness", r.flatness),
            );
        }
    }

    res.blocks = est
        .records
        .iter()
        .map(|&(replica, k, record)| BlockRow { replica, k, record })
        .collect();
    Ok(res)
}
