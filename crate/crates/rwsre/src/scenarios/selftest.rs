//! Checks of the limit-law samplers against transforms, moments and exact CDFs.

use rwsre_core::branching::critical_total_progeny;
use rwsre_core::heavytail::{kanter_stable, passage_time_mean, subordinator_marginal};
use rwsre_core::limitlaw::{
    inverse_subordinator_at_one, theta_cdf, theta_moment, LevyPair, ThetaMethod, ThetaSampler,
    DEFAULT_EPS,
};
use rwsre_core::stats::{ks_distance, ks_distance_cdf, laplace_check, mean, EcdfSummary, MetricSummary};
use rwsre_core::walk::ReflectedPassage;

use super::{Ctx, ScenarioError};
use crate::result::{Check, EcdfPair, LimitDraws, RunResult};

/// Cap on draws for the slower samplers.
const HEAVY_MAX: u64 = 100_000;
/// Walk half-width for the lattice theta sampler.
const SRW_M: u64 = 512;
/// Level used when the config has no grid.
const DEFAULT_LEVEL: u64 = 2000;
/// Time at which subordinator self-similarity is tested.
const SELF_SIMILAR_T: f64 = 2.5;
/// Stable index of the transform and passage-time checks.
const HALF: f64 = 0.5;
/// Grid of the jump-measure tail check.
const MU_GRID: [f64; 3] = [0.5, 1.0, 2.0];
/// Poisson horizon of the jump-measure tail check.
const MU_HORIZON: f64 = 2e4;
/// Jump floor of the jump-measure tail check.
const MU_FLOOR: f64 = 0.01;

pub(super) fn run(ctx: &Ctx) -> Result<RunResult, ScenarioError> {
    let cfg = ctx.cfg;
    let draws = cfg.replicas;
    let heavy = draws.min(HEAVY_MAX);
    let m = cfg.n_grid.last().map_or(DEFAULT_LEVEL, |&n| n as u64);
    let mut res = RunResult::new(cfg.scenario.tag(), "value");
    let v = &mut res.verdict;
    v.param("draws", draws);
    v.param("heavy_draws", heavy);
    v.param("level", m);

    let series = ThetaSampler::new(ThetaMethod::IntervalExitSeries)?;
    let theta: Vec<f64> = ctx.runner.map(draws, |i| series.sample(&mut ctx.rng("theta", 0, i)));
    let s_grid = [0.5, 1.0, 2.0, 4.0];
    let gaps = laplace_check(&theta, &s_grid, |s| 1.0 / s.sqrt().cosh());
    for (s, g) in s_grid.iter().zip(&gaps) {
        v.checks.push(Check::at_most(format!("theta_laplace_s{s}"), *g, 0.005));
    }
    let m1 = mean(&theta);
    let m2 = mean(&theta.iter().map(|x| x * x).collect::<Vec<_>>());
    v.checks.push(Check::within("theta_mean", m1, 0.49, 0.51));
    v.checks.push(Check::within("theta_second_moment", m2, 0.405, 0.43));

    let lattice = ThetaSampler::new(ThetaMethod::SrwExit { m: SRW_M })?;
    let theta_srw: Vec<f64> =
        ctx.runner.map(heavy, |i| lattice.sample(&mut ctx.rng("theta-srw", 0, i)));
    let series_ecdf = EcdfSummary::new(theta.clone());
    let ks = ks_distance(&series_ecdf, &EcdfSummary::new(theta_srw.clone()));
    v.checks.push(Check::at_most("theta_methods_ks", ks, 0.01));

    let mf = m as f64;
    let progeny: Vec<f64> = ctx.runner.map(heavy, |i| {
        critical_total_progeny(m, &mut ctx.rng("progeny", m, i)) as f64 / (mf * mf)
    });
    let ks = ks_distance_cdf(&EcdfSummary::new(progeny.clone()), theta_cdf);
    v.checks.push(Check::at_most("critical_progeny_ks", ks, 0.02));

    let passage = ReflectedPassage::new(m);
    let reflected: Vec<f64> = ctx.runner.map(heavy, |i| {
        passage.sample(&mut ctx.rng("reflected", m, i)) as f64 / (mf * mf)
    });
    let ks = ks_distance_cdf(&EcdfSummary::new(reflected.clone()), |x| theta_cdf(x / 2.0));
    v.checks.push(Check::at_most("reflected_passage_ks", ks, 0.02));
    let two = ReflectedPassage::new(2);
    let t2: Vec<f64> = ctx.runner.map(draws, |i| two.sample(&mut ctx.rng("reflected", 2, i)) as f64);
    v.checks.push(Check::within("reflected_two_mean", mean(&t2), 3.97, 4.03));

    let sigma: Vec<f64> = ctx.runner.map(draws, |i| kanter_stable(HALF, &mut ctx.rng("kanter", 0, i)));
    let gap = laplace_check(&sigma, &[1.0], |s| (-s.powf(HALF)).exp())[0];
    v.checks.push(Check::at_most("kanter_laplace", gap, 0.005));

    let at_one: Vec<f64> = ctx.runner.map(heavy, |i| {
        subordinator_marginal(HALF, 1.0, 1.0, &mut ctx.rng("subordinator", 1, i))
    });
    let scale = SELF_SIMILAR_T.powf(-1.0 / HALF);
    let at_t: Vec<f64> = ctx.runner.map(heavy, |i| {
        scale * subordinator_marginal(HALF, 1.0, SELF_SIMILAR_T, &mut ctx.rng("subordinator", 2, i))
    });
    let ks = ks_distance(&EcdfSummary::new(at_one), &EcdfSummary::new(at_t));
    v.checks.push(Check::at_most("self_similarity_ks", ks, 0.01));

    let passage_times: Vec<f64> = ctx.runner.map(draws, |i| {
        inverse_subordinator_at_one(HALF, &mut ctx.rng("passage", 0, i))
    });
    let target = passage_time_mean(HALF);
    v.checks.push(Check::within(
        "passage_time_mean",
        mean(&passage_times),
        target * 0.98,
        target * 1.02,
    ));

    // jump measure of the coupled pair against its closed-form tail
    let c_mu = theta_moment(HALF / 2.0);
    let mc_moment = mean(&theta.iter().map(|x| x.powf(HALF / 2.0)).collect::<Vec<_>>());
    v.metrics.push(MetricSummary::new("theta_quarter_moment", mc_moment, theta.len()).param("quadrature", c_mu));
    let pair = LevyPair::new(HALF, c_mu, DEFAULT_EPS)?;
    let thetas = &theta[..heavy as usize];
    let cells: Vec<(f64, f64)> = MU_GRID
        .iter()
        .flat_map(|&a| MU_GRID.iter().map(move |&b| (a, b)))
        .collect();
    let rates = ctx.runner.map(cells.len() as u64, |i| {
        let (x1, x2) = cells[i as usize];
        let mut rng = ctx.rng("mu-tail", 0, i);
        pair.tail_rate_mc(x1, x2, MU_HORIZON, MU_FLOOR, &series, &mut rng)
    });
    for (&(x1, x2), rate) in cells.iter().zip(rates) {
        let exact = pair.tail_formula(x1, x2, thetas);
        let rel = (rate / exact - 1.0).abs();
        v.checks.push(Check::at_most(format!("mu_tail_{x1}_{x2}"), rel, 0.05));
    }

    res.pairs.push(EcdfPair {
        label: "theta_methods".into(),
        empirical: theta_srw,
        reference: theta.clone(),
    });
    res.pairs.push(EcdfPair {
        label: "critical_progeny".into(),
        empirical: progeny,
        reference: theta.clone(),
    });
    res.pairs.push(EcdfPair {
        label: "reflected_passage".into(),
        empirical: reflected,
        reference: theta.iter().map(|x| 2.0 * x).collect(),
    });
    res.limit = Some(LimitDraws {
        law: "theta",
        values: theta,
    });
    Ok(res)
}
