//! Samplers for the limit laws: `theta` (Laplace transform `1/cosh sqrt(s)`), `M(1)`, the coupled
//! Levy pair and `chi`, the independent-subordinator functional, and stable marginals at time 1.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::heavytail::{kanter_stable, subordinator_marginal};
use crate::math;
use crate::walk::ReflectedPassage;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LimitError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("C_mu = {c_mu} is below E theta^(beta/2) = {moment}")]
    InconsistentConstant { c_mu: f64, moment: f64 },
}

fn bad(msg: String) -> LimitError {
    LimitError::InvalidParameter(msg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThetaMethod {
    /// Exit time of simple random walk from `(-m, m)`, over `2 m^2`.
    SrwExit { m: u64 },
    /// Inversion of the Brownian exit-time CDF, halved.
    #[default]
    IntervalExitSeries,
}


/// `P{tau <= t}` for the exit time `tau` of Brownian motion from `(-1, 1)`.
pub fn interval_exit_cdf(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t < 1.0 {
        small_time_cdf(t)
    } else {
        1.0 - interval_exit_survival(t)
    }
}

/// `P{tau > t}`.
pub fn interval_exit_survival(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t < 1.0 {
        return 1.0 - small_time_cdf(t);
    }
    let c = math::PI * math::PI * t / 8.0;
    let mut s = 0.0;
    for k in 0..40 {
        let j = (2 * k + 1) as f64;
        let term = math::exp(-j * j * c) / j;
        if term < 1e-300 {
            break;
        }
        s += if k % 2 == 0 { term } else { -term };
    }
    4.0 / math::PI * s
}

fn small_time_cdf(t: f64) -> f64 {
    let r = 1.0 / math::sqrt(2.0 * t);
    let mut s = 0.0;
    for k in 0..40 {
        let term = math::erfc((2 * k + 1) as f64 * r);
        if term < 1e-300 {
            break;
        }
        s += if k % 2 == 0 { term } else { -term };
    }
    2.0 * s
}

/// `P{theta <= x}`.
pub fn theta_cdf(x: f64) -> f64 {
    interval_exit_cdf(2.0 * x)
}

/// Draw of `tau` with `P{tau <= t} = u`.
fn invert_exit(u: f64) -> f64 {
    math::exp(math::bisect(|lt| exit_gap(lt, u), LN_LO, LN_HI, 64))
}

/// Range of `ln tau` covered by the inversion table.
const LN_LO: f64 = -8.0;
const LN_HI: f64 = 6.0;
const TABLE_LEN: usize = 2048;

/// Signed inversion target: increasing in `ln t`, zero at the draw.
fn exit_gap(lt: f64, u: f64) -> f64 {
    let t = math::exp(lt);
    if u < 0.5 {
        interval_exit_cdf(t) - u
    } else {
        (1.0 - u) - interval_exit_survival(t)
    }
}

/// Illinois iteration on a bracket `[a, b]` with `g(a) <= 0 <= g(b)`.
fn illinois<G: Fn(f64) -> f64>(g: G, mut a: f64, mut b: f64) -> f64 {
    let (mut fa, mut fb) = (g(a), g(b));
    if fa >= 0.0 {
        return a;
    }
    if fb <= 0.0 {
        return b;
    }
    let mut side = 0i8;
    for _ in 0..60 {
        let c = (a * fb - b * fa) / (fb - fa);
        let fc = g(c);
        if fc == 0.0 || (b - a).abs() < 1e-13 {
            return c;
        }
        if fc < 0.0 {
            a = c;
            fa = fc;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = c;
            fb = fc;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    0.5 * (a + b)
}

/// Sampler of `theta`.
#[derive(Debug, Clone)]
pub struct ThetaSampler {
    method: ThetaMethod,
    passage: Option<ReflectedPassage>,
    /// `P{tau <= e^x}` on an even grid of `x` over `[LN_LO, LN_HI]`.
    cdf_table: Vec<f64>,
}

impl ThetaSampler {
    pub fn new(method: ThetaMethod) -> Result<Self, LimitError> {
        let (passage, cdf_table) = match method {
            ThetaMethod::SrwExit { m } => {
                if m < 500 {
                    return Err(bad(format!("srw exit needs m >= 500, got {m}")));
                }
                (Some(ReflectedPassage::new(m)), Vec::new())
            }
            ThetaMethod::IntervalExitSeries => {
                let h = (LN_HI - LN_LO) / (TABLE_LEN - 1) as f64;
                let table = (0..TABLE_LEN)
                    .map(|i| interval_exit_cdf(math::exp(LN_LO + h * i as f64)))
                    .collect();
                (None, table)
            }
        };
        Ok(ThetaSampler {
            method,
            passage,
            cdf_table,
        })
    }

    fn invert(&self, u: f64) -> f64 {
        let tab = &self.cdf_table;
        let h = (LN_HI - LN_LO) / (TABLE_LEN - 1) as f64;
        let j = tab.partition_point(|&c| c <= u);
        if j == 0 || j >= tab.len() {
            return invert_exit(u);
        }
        let a = LN_LO + h * (j - 1) as f64;
        math::exp(illinois(|lt| exit_gap(lt, u), a, a + h))
    }

    pub fn method(&self) -> ThetaMethod {
        self.method
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match (&self.method, &self.passage) {
            (ThetaMethod::SrwExit { m }, Some(p)) => {
                let mf = *m as f64;
                p.sample(rng) as f64 / (2.0 * mf * mf)
            }
            _ => {
                let u = 1.0 - rng.random::<f64>();
                0.5 * self.invert(u)
            }
        }
    }

    /// `M(1)`, the first passage of Brownian motion over level 1 of its running maximum of `|B|`.
    pub fn sample_m1<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        2.0 * self.sample(rng)
    }
}

/// One `theta` draw by plain bisection; prefer [`ThetaSampler`] for many draws.
pub fn sample_theta<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    0.5 * invert_exit(1.0 - rng.random::<f64>())
}

/// One `M(1)` draw.
pub fn sample_m1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    2.0 * sample_theta(rng)
}

/// `E theta^p` for `p > 0` by quadrature of `p x^(p-1) P{theta > x}` in `ln x`.
pub fn theta_moment(p: f64) -> f64 {
    assert!(p > 0.0);
    let lo = -8.0f64;
    let hi = 4.5f64;
    // below e^lo the survival function is 1 to double precision
    let head = math::exp(p * lo);
    let body = math::simpson(
        |y| {
            let x = math::exp(y);
            p * math::exp(p * y) * interval_exit_survival(2.0 * x)
        },
        lo,
        hi,
        20_000,
    );
    head + body
}

/// Components of the coupled Levy pair that are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairComponents {
    pub coupled: bool,
    pub pure: bool,
}

impl Default for PairComponents {
    fn default() -> Self {
        PairComponents {
            coupled: true,
            pure: true,
        }
    }
}

/// Precomputed constants for the coupled pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevyPair {
    pub beta: f64,
    pub c_mu: f64,
    pub eps: f64,
    /// `E theta^(beta/2)`.
    pub theta_moment: f64,
    /// Tail constant of the independent second-coordinate component.
    pub pure_const: f64,
    pub components: PairComponents,
}

/// Default small-jump truncation.
pub const DEFAULT_EPS: f64 = 1e-4;
/// Slack allowed when `C_mu` falls below `E theta^(beta/2)` (quadrature accuracy).
const MOMENT_SLACK: f64 = 1e-9;

impl LevyPair {
    pub fn new(beta: f64, c_mu: f64, eps: f64) -> Result<Self, LimitError> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(bad(format!("beta = {beta} outside (0, 1)")));
        }
        if !(eps > 0.0 && eps <= 1e-3) {
            return Err(bad(format!("eps = {eps} outside (0, 1e-3]")));
        }
        let moment = theta_moment(beta / 2.0);
        if !(c_mu >= moment - 3.0 * MOMENT_SLACK) {
            return Err(LimitError::InconsistentConstant { c_mu, moment });
        }
        Ok(LevyPair {
            beta,
            c_mu,
            eps,
            theta_moment: moment,
            pure_const: (c_mu - moment).max(0.0),
            components: PairComponents::default(),
        })
    }

    pub fn with_components(mut self, components: PairComponents) -> Self {
        self.components = components;
        self
    }

    /// Drift replacing first-coordinate jumps below `eps`.
    pub fn drift_first(&self) -> f64 {
        let b = self.beta;
        math::powf(self.eps, 1.0 - b) * b / (1.0 - b)
    }

    /// Drift replacing second-coordinate mass of coupled jumps below `eps`.
    pub fn drift_second(&self) -> f64 {
        let b = self.beta;
        0.5 * b * math::powf(self.eps, 2.0 - b) / (2.0 - b)
    }

    /// Run until the first coordinate passes 1.
    pub fn sample<R: Rng + ?Sized>(&self, theta: &ThetaSampler, rng: &mut R) -> LevyPairDraw {
        if !self.components.coupled {
            return LevyPairDraw {
                l1_left: 0.0,
                l2_left: 0.0,
                passage_time: f64::INFINITY,
                jump_count: 0,
                eps: self.eps,
            };
        }
        let b = self.beta;
        let rate = math::powf(self.eps, -b);
        let (d1, d2) = (self.drift_first(), self.drift_second());
        let (mut t, mut x, mut y) = (0.0f64, 0.0f64, 0.0f64);
        let mut jumps = 0u64;
        let (l1_left, l2_left, passage) = loop {
            let gap: f64 = Exp1.sample(rng);
            let dt = gap / rate;
            if x + d1 * dt >= 1.0 {
                // creeps over 1 between jumps
                let s = (1.0 - x) / d1;
                break (1.0, y + d2 * s, t + s);
            }
            t += dt;
            x += d1 * dt;
            y += d2 * dt;
            let u = self.eps * math::powf(1.0 - rng.random::<f64>(), -1.0 / b);
            if x + u > 1.0 {
                break (x, y, t);
            }
            x += u;
            y += u * u * theta.sample(rng);
            jumps += 1;
        };
        let pure = if self.components.pure {
            subordinator_marginal(b / 2.0, self.pure_const, passage, rng)
        } else {
            0.0
        };
        LevyPairDraw {
            l1_left,
            l2_left: l2_left + pure,
            passage_time: passage,
            jump_count: jumps,
            eps: self.eps,
        }
    }

    /// `chi = l2_left + theta (1 - l1_left)^2` with an independent `theta`.
    pub fn sample_chi<R: Rng + ?Sized>(&self, theta: &ThetaSampler, rng: &mut R) -> f64 {
        let d = self.sample(theta, rng);
        let gap = 1.0 - d.l1_left;
        d.l2_left + theta.sample(rng) * gap * gap
    }

    /// `mu{u > x1 or v > x2}` using `theta` draws for the expectation term.
    pub fn tail_formula(&self, x1: f64, x2: f64, thetas: &[f64]) -> f64 {
        let b = self.beta;
        let a = math::powf(x1, -b);
        let e = thetas
            .iter()
            .map(|th| a.min(math::powf(x2, -b / 2.0) * math::powf(*th, b / 2.0)))
            .sum::<f64>()
            / thetas.len() as f64;
        a + self.c_mu * math::powf(x2, -b / 2.0) - e
    }

    /// Monte Carlo rate of jumps with `u > x1 or v > x2` per unit time, over `horizon`.
    ///
    /// Coupled jumps are drawn above `floor`; the pure component above `floor^2`.
    pub fn tail_rate_mc<R: Rng + ?Sized>(
        &self,
        x1: f64,
        x2: f64,
        horizon: f64,
        floor: f64,
        theta: &ThetaSampler,
        rng: &mut R,
    ) -> f64 {
        let b = self.beta;
        let mut hits = 0u64;
        let n_coupled = poisson_count(horizon * math::powf(floor, -b), rng);
        for _ in 0..n_coupled {
            let u = floor * math::powf(1.0 - rng.random::<f64>(), -1.0 / b);
            if u > x1 || u * u * theta.sample(rng) > x2 {
                hits += 1;
            }
        }
        if self.components.pure && self.pure_const > 0.0 {
            let lvl = floor * floor;
            let n_pure = poisson_count(horizon * self.pure_const * math::powf(lvl, -b / 2.0), rng);
            for _ in 0..n_pure {
                let v = lvl * math::powf(1.0 - rng.random::<f64>(), -2.0 / b);
                if v > x2 {
                    hits += 1;
                }
            }
        }
        hits as f64 / horizon
    }

    /// Per-unit-time sum of `min(|jump|, 1)` over coupled jumps above `eps`, over `horizon`.
    pub fn small_jump_mass_mc<R: Rng + ?Sized>(
        &self,
        horizon: f64,
        theta: &ThetaSampler,
        rng: &mut R,
    ) -> f64 {
        let b = self.beta;
        let n = poisson_count(horizon * math::powf(self.eps, -b), rng);
        let mut s = 0.0;
        for _ in 0..n {
            let u = self.eps * math::powf(1.0 - rng.random::<f64>(), -1.0 / b);
            let v = u * u * theta.sample(rng);
            s += math::sqrt(u * u + v * v).min(1.0);
        }
        s / horizon
    }
}

fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    rand_distr::Poisson::new(mean).expect("finite mean").sample(rng) as u64
}

/// Left limits of the pair at the first passage of the first coordinate over 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevyPairDraw {
    pub l1_left: f64,
    pub l2_left: f64,
    pub passage_time: f64,
    pub jump_count: u64,
    pub eps: f64,
}

/// First passage over 1 of the `beta`-stable subordinator with tail `x^-beta`.
pub fn inverse_subordinator_at_one<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> f64 {
    math::powf(kanter_stable(beta, rng), -beta) / math::gamma(1.0 - beta)
}

/// `L2(L1^{<-}(1))` for independent subordinators with tails `x^-beta` and `c_z x^-alpha`.
pub fn sample_indep_limit<R: Rng + ?Sized>(alpha: f64, beta: f64, c_z: f64, rng: &mut R) -> f64 {
    if c_z <= 0.0 {
        return 0.0;
    }
    let tau = inverse_subordinator_at_one(beta, rng);
    subordinator_marginal(alpha, c_z, tau, rng)
}

/// Value at time 1 of the stable subordinator with index `index` and tail `tail_const x^-index`.
pub fn sample_l2_at_1<R: Rng + ?Sized>(index: f64, tail_const: f64, rng: &mut R) -> f64 {
    subordinator_marginal(index, tail_const, 1.0, rng)
}

/// Tag of a limit sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitLaw {
    Theta,
    M1,
    Chi,
    Indep,
    L2,
}

/// A draw from one of the limit laws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitSample {
    pub law: LimitLaw,
    pub value: f64,
}

/// `count` values of `2 chi`.
pub fn two_chi_sample<R: Rng + ?Sized>(
    pair: &LevyPair,
    theta: &ThetaSampler,
    count: usize,
    rng: &mut R,
) -> Vec<f64> {
    (0..count).map(|_| 2.0 * pair.sample_chi(theta, rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exit_series_agree_at_switch() {
        for &t in &[0.3, 0.8, 1.0, 1.5, 3.0] {
            let a = small_time_cdf(t);
            let b = 1.0 - {
                let c = math::PI * math::PI * t / 8.0;
                let mut s = 0.0;
                for k in 0..40 {
                    let j = (2 * k + 1) as f64;
                    let term = math::exp(-j * j * c) / j;
                    s += if k % 2 == 0 { term } else { -term };
                }
                4.0 / math::PI * s
            };
            assert!((a - b).abs() < 1e-12, "t={t}: {a} vs {b}");
        }
    }

    #[test]
    fn theta_moments_by_quadrature() {
        assert!((theta_moment(1.0) - 0.5).abs() < 1e-8);
        assert!((theta_moment(2.0) - 5.0 / 12.0).abs() < 1e-8);
    }

    #[test]
    fn theta_transform_and_positivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = ThetaSampler::new(ThetaMethod::IntervalExitSeries).unwrap();
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| s.sample(&mut rng)).collect();
        assert!(xs.iter().all(|x| *x > 0.0));
        for &q in &[0.5, 1.0, 2.0, 4.0] {
            let lt = xs.iter().map(|x| math::exp(-q * x)).sum::<f64>() / n as f64;
            assert!((lt - 1.0 / math::cosh(math::sqrt(q))).abs() < 0.005);
        }
        let m = xs.iter().sum::<f64>() / n as f64;
        assert!((0.49..=0.51).contains(&m));
    }

    #[test]
    fn srw_method_needs_large_m() {
        assert!(ThetaSampler::new(ThetaMethod::SrwExit { m: 100 }).is_err());
        let s = ThetaSampler::new(ThetaMethod::SrwExit { m: 600 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 20_000;
        let m = (0..n).map(|_| s.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((m - 0.5).abs() < 0.02);
    }

    #[test]
    fn pair_rejects_small_constant() {
        let c = theta_moment(0.25);
        assert!(matches!(
            LevyPair::new(0.5, c - 0.01, 1e-4),
            Err(LimitError::InconsistentConstant { .. })
        ));
        assert!(LevyPair::new(0.5, c, 1e-4).is_ok());
        assert!(LevyPair::new(0.5, c, 1e-2).is_err());
    }

    #[test]
    fn pair_left_limits_are_consistent() {
        let pair = LevyPair::new(0.5, theta_moment(0.25), 1e-4).unwrap();
        let theta = ThetaSampler::new(ThetaMethod::IntervalExitSeries).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let d = pair.sample(&theta, &mut rng);
            assert!(d.l1_left >= 0.0 && d.l1_left <= 1.0);
            assert!(d.l2_left >= 0.0);
            assert!(d.passage_time > 0.0);
        }
    }

    #[test]
    fn disabled_pair_reduces_chi_to_theta() {
        let pair = LevyPair::new(0.5, theta_moment(0.25), 1e-4)
            .unwrap()
            .with_components(PairComponents {
                coupled: false,
                pure: false,
            });
        let theta = ThetaSampler::new(ThetaMethod::IntervalExitSeries).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a: Vec<f64> = (0..50_000).map(|_| pair.sample_chi(&theta, &mut rng)).collect();
        let b: Vec<f64> = (0..50_000).map(|_| theta.sample(&mut rng)).collect();
        let d = crate::stats::ks_distance(
            &crate::stats::EcdfSummary::new(a),
            &crate::stats::EcdfSummary::new(b),
        );
        assert!(d < 0.015, "{d}");
    }

    #[test]
    fn indep_limit_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert_eq!(sample_indep_limit(0.25, 0.5, 0.0, &mut rng), 0.0);
        let n = 200_000;
        let m = (0..n)
            .map(|_| inverse_subordinator_at_one(0.5, &mut rng))
            .sum::<f64>()
            / n as f64;
        assert!((m / (2.0 / math::PI) - 1.0).abs() < 0.02);
    }
}
