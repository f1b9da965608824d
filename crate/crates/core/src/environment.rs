//! Sparse random environments: model laws, lazily realized mark windows, and scalar summaries.
//!
//! Marked sites are `S_0 = 0`, `S_k = S_{k-1} + xi_k`. The drift at site `S_k` is
//! `lambda_{k+1}`; every other site is symmetric.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta as BetaDist, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::math;

/// Gaps are clamped to this value so that site arithmetic stays exact in `i64` and `f64`.
pub const XI_MAX: u64 = 1 << 53;

/// Marks generated per counter-based RNG stream.
pub const CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvError {
    #[error("invalid model: {0}")]
    InvalidSpec(String),
    #[error("site {site} lies outside the realized window [{lo}, {hi}]")]
    OutOfWindow { site: i64, lo: i64, hi: i64 },
    #[error("empty mark range")]
    EmptyRange,
    #[error("E log rho = {0} is not negative")]
    NotTransient(f64),
    #[error("E rho^x is not finite at x = {0} before reaching 1")]
    DivergingMoment(f64),
}

fn invalid(msg: &str) -> EnvError {
    EnvError::InvalidSpec(String::from(msg))
}

/// Slowly varying factor of a Pareto-type gap tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SlowlyVarying {
    /// Tail `c * t^-beta` above `c^(1/beta)`.
    Const { c: f64 },
    /// Tail `t^-beta (1 + ln t)^p` above 1; requires `p <= beta`.
    LogGrowing { p: f64 },
    /// Tail `t^-beta (1 + ln t)^-p` above 1.
    LogVanishing { p: f64 },
}

/// Law of the gap `xi` between consecutive marked sites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum XiLaw {
    Constant { value: u64 },
    /// `1 + Geom0(p)`, supported on `{1, 2, ...}`.
    ShiftedGeometric { p: f64 },
    /// Ceiling of a continuous Pareto-type variable with index `ModelSpec::beta`.
    Pareto { slowly: SlowlyVarying },
}

/// Law of the drift `lambda` at marked sites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LambdaLaw {
    Constant { value: f64 },
    /// `values[0]` with probability `p_first`, otherwise `values[1]`.
    TwoPoint { values: [f64; 2], p_first: f64 },
    Beta { a: f64, b: f64 },
    /// `rho = (1 - lambda) / lambda` is lognormal with parameters `mu`, `sigma`.
    LogNormalRho { mu: f64, sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coupling {
    #[default]
    Independent,
    /// `xi` and `rho` driven by one uniform; `comonotone` pairs long gaps with large `rho`.
    RankCoupled { comonotone: bool },
}

/// Joint law of `(xi, lambda)` plus regime metadata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub xi: XiLaw,
    pub lambda: LambdaLaw,
    #[serde(default)]
    pub coupling: Coupling,
    /// Tail index of `xi`; used by the Pareto family.
    pub beta: f64,
    #[serde(default)]
    pub alpha_hint: Option<f64>,
}

/// `rho = (1 - lambda) / lambda`.
#[inline]
pub fn rho(lambda: f64) -> f64 {
    (1.0 - lambda) / lambda
}

impl LambdaLaw {
    /// Two-point law specified through `rho` values.
    pub fn two_point_rho(rho_first: f64, rho_second: f64, p_first: f64) -> Self {
        LambdaLaw::TwoPoint {
            values: [1.0 / (1.0 + rho_first), 1.0 / (1.0 + rho_second)],
            p_first,
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let inside = |l: f64| l > 0.0 && l < 1.0;
        match *self {
            LambdaLaw::Constant { value } if !inside(value) => {
                Err(invalid("lambda must lie strictly inside (0, 1)"))
            }
            LambdaLaw::TwoPoint { values, p_first } => {
                if !(p_first > 0.0 && p_first < 1.0) {
                    return Err(invalid("two-point weight must lie strictly inside (0, 1)"));
                }
                if !inside(values[0]) || !inside(values[1]) {
                    return Err(invalid("lambda must lie strictly inside (0, 1)"));
                }
                Ok(())
            }
            LambdaLaw::Beta { a, b } if !(a > 0.0 && b > 0.0) => {
                Err(invalid("beta law parameters must be positive"))
            }
            LambdaLaw::LogNormalRho { mu, sigma } if !(mu.is_finite() && sigma >= 0.0) => {
                Err(invalid("lognormal rho needs finite mu and sigma >= 0"))
            }
            _ => Ok(()),
        }
    }

    /// `E rho^x`, possibly infinite.
    pub fn e_rho_pow(&self, x: f64) -> f64 {
        match *self {
            LambdaLaw::Constant { value } => math::powf(rho(value), x),
            LambdaLaw::TwoPoint { values, p_first } => {
                p_first * math::powf(rho(values[0]), x)
                    + (1.0 - p_first) * math::powf(rho(values[1]), x)
            }
            LambdaLaw::Beta { a, b } => {
                // E (1-l)^x l^-x = B(a - x, b + x) / B(a, b)
                if x >= a || x <= -b {
                    f64::INFINITY
                } else {
                    math::exp(
                        math::lgamma(a - x) + math::lgamma(b + x) - math::lgamma(a) - math::lgamma(b),
                    )
                }
            }
            LambdaLaw::LogNormalRho { mu, sigma } => math::exp(x * mu + 0.5 * x * x * sigma * sigma),
        }
    }

    pub fn e_log_rho(&self) -> f64 {
        match *self {
            LambdaLaw::Constant { value } => math::ln(rho(value)),
            LambdaLaw::TwoPoint { values, p_first } => {
                p_first * math::ln(rho(values[0])) + (1.0 - p_first) * math::ln(rho(values[1]))
            }
            LambdaLaw::Beta { a, b } => math::digamma(b) - math::digamma(a),
            LambdaLaw::LogNormalRho { mu, .. } => mu,
        }
    }

    /// Nondecreasing quantile function.
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            LambdaLaw::Constant { value } => value,
            LambdaLaw::TwoPoint { values, p_first } => {
                let (lo, hi, p_lo) = if values[0] <= values[1] {
                    (values[0], values[1], p_first)
                } else {
                    (values[1], values[0], 1.0 - p_first)
                };
                if u <= p_lo {
                    lo
                } else {
                    hi
                }
            }
            LambdaLaw::Beta { a, b } => {
                math::bisect(|x| math::inc_beta(a, b, x) - u, 0.0, 1.0, 80)
            }
            LambdaLaw::LogNormalRho { mu, sigma } => {
                let z = math::norm_quantile(1.0 - u);
                1.0 / (1.0 + math::exp(mu + sigma * z))
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            LambdaLaw::Constant { value } => value,
            LambdaLaw::TwoPoint { values, p_first } => {
                if rng.random::<f64>() < p_first {
                    values[0]
                } else {
                    values[1]
                }
            }
            LambdaLaw::Beta { a, b } => {
                let d = BetaDist::new(a, b).expect("validated beta parameters");
                clamp_open(d.sample(rng))
            }
            LambdaLaw::LogNormalRho { mu, sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                clamp_open(1.0 / (1.0 + math::exp(mu + sigma * z)))
            }
        }
    }
}

fn clamp_open(l: f64) -> f64 {
    l.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
}

/// Continuous Pareto-type variable whose ceiling is the gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParetoTail {
    pub beta: f64,
    pub slowly: SlowlyVarying,
}

impl ParetoTail {
    /// Left end of the support.
    pub fn lower(&self) -> f64 {
        match self.slowly {
            SlowlyVarying::Const { c } => math::powf(c, 1.0 / self.beta),
            _ => 1.0,
        }
    }

    /// Survival function of the continuous variable.
    pub fn survival(&self, t: f64) -> f64 {
        if t <= self.lower() {
            return 1.0;
        }
        match self.slowly {
            SlowlyVarying::Const { c } => c * math::powf(t, -self.beta),
            SlowlyVarying::LogGrowing { p } => {
                math::powf(t, -self.beta) * math::powf(1.0 + math::ln(t), p)
            }
            SlowlyVarying::LogVanishing { p } => {
                math::powf(t, -self.beta) * math::powf(1.0 + math::ln(t), -p)
            }
        }
    }

    /// The slowly varying factor `l(t)`.
    pub fn slowly_factor(&self, t: f64) -> f64 {
        let t = t.max(1.0);
        match self.slowly {
            SlowlyVarying::Const { c } => c,
            SlowlyVarying::LogGrowing { p } => math::powf(1.0 + math::ln(t), p),
            SlowlyVarying::LogVanishing { p } => math::powf(1.0 + math::ln(t), -p),
        }
    }

    /// Point `t` with `survival(t) = u` for `u` in `(0, 1]`.
    pub fn inverse_survival(&self, u: f64) -> f64 {
        if u >= 1.0 {
            return self.lower();
        }
        match self.slowly {
            SlowlyVarying::Const { c } => math::powf(c / u, 1.0 / self.beta),
            SlowlyVarying::LogGrowing { p } | SlowlyVarying::LogVanishing { p } => {
                let sign = if matches!(self.slowly, SlowlyVarying::LogGrowing { .. }) {
                    p
                } else {
                    -p
                };
                let target = math::ln(u);
                let g = |y: f64| -self.beta * y + sign * math::ln(1.0 + y) - target;
                let mut hi = (-target / self.beta).max(1.0);
                while g(hi) > 0.0 {
                    hi *= 2.0;
                }
                math::exp(math::bisect(g, 0.0, hi, 200))
            }
        }
    }

    /// Tail of the integer gap `ceil(P)`: `P{xi > t} = survival(floor(t))`.
    pub fn xi_survival(&self, t: f64) -> f64 {
        self.survival(math::floor(t))
    }
}

fn gap_from_continuous(x: f64) -> u64 {
    let c = math::ceil(x);
    if c >= XI_MAX as f64 {
        XI_MAX
    } else if c < 1.0 {
        1
    } else {
        c as u64
    }
}

impl XiLaw {
    pub fn validate(&self, beta: f64) -> Result<(), EnvError> {
        match *self {
            XiLaw::Constant { value: 0 } => Err(invalid("constant gap must be >= 1")),
            XiLaw::ShiftedGeometric { p } if !(p > 0.0 && p <= 1.0) => {
                Err(invalid("geometric gap parameter must lie in (0, 1]"))
            }
            XiLaw::Pareto { slowly } => {
                if !(beta > 0.0 && beta.is_finite()) {
                    return Err(invalid("Pareto gaps need beta > 0"));
                }
                match slowly {
                    SlowlyVarying::Const { c } if !(c > 0.0) => {
                        Err(invalid("slowly varying constant must be positive"))
                    }
                    SlowlyVarying::LogGrowing { p } if !(p > 0.0 && p <= beta) => {
                        Err(invalid("growing log factor needs 0 < p <= beta"))
                    }
                    SlowlyVarying::LogVanishing { p } if !(p > 0.0) => {
                        Err(invalid("vanishing log factor needs p > 0"))
                    }
                    _ => Ok(()),
                }
            }
            _ => Ok(()),
        }
    }

    /// Nondecreasing quantile function of the integer gap.
    pub fn quantile(&self, u: f64, beta: f64) -> u64 {
        match *self {
            XiLaw::Constant { value } => value,
            XiLaw::ShiftedGeometric { p } => {
                if p >= 1.0 || u <= 0.0 {
                    return 1;
                }
                let k = math::ceil(math::log1p(-u) / math::log1p(-p));
                gap_from_continuous(k.max(1.0))
            }
            XiLaw::Pareto { slowly } => {
                let tail = ParetoTail { beta, slowly };
                gap_from_continuous(tail.inverse_survival(1.0 - u))
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, beta: f64, rng: &mut R) -> u64 {
        match *self {
            XiLaw::Constant { value } => value,
            _ => self.quantile(rng.random::<f64>(), beta),
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(invalid("beta must be positive"));
        }
        self.xi.validate(self.beta)?;
        self.lambda.validate()?;
        if let Some(a) = self.alpha_hint {
            if !(a > 0.0 && a.is_finite()) {
                return Err(invalid("alpha hint must be positive"));
            }
        }
        Ok(())
    }

    /// Continuous tail representative when the gaps are Pareto-type.
    pub fn pareto_tail(&self) -> Option<ParetoTail> {
        match self.xi {
            XiLaw::Pareto { slowly } => Some(ParetoTail {
                beta: self.beta,
                slowly,
            }),
            _ => None,
        }
    }

    /// Exact `P{xi > t}`.
    pub fn xi_survival(&self, t: f64) -> f64 {
        match self.xi {
            XiLaw::Constant { value } => {
                if t < value as f64 {
                    1.0
                } else {
                    0.0
                }
            }
            XiLaw::ShiftedGeometric { p } => {
                if t < 1.0 {
                    1.0
                } else {
                    math::powf(1.0 - p, math::floor(t))
                }
            }
            XiLaw::Pareto { slowly } => ParetoTail {
                beta: self.beta,
                slowly,
            }
            .xi_survival(t),
        }
    }

    /// One mark `(xi, lambda)`.
    pub fn sample_mark<R: Rng + ?Sized>(&self, rng: &mut R) -> Mark {
        match self.coupling {
            Coupling::Independent => {
                let xi = self.xi.sample(self.beta, rng);
                let lambda = self.lambda.sample(rng);
                Mark { xi, lambda }
            }
            Coupling::RankCoupled { comonotone } => {
                let u: f64 = rng.random::<f64>();
                let xi = self.xi.quantile(u, self.beta);
                // large rho means small lambda
                let v = if comonotone { 1.0 - u } else { u };
                let lambda = clamp_open(self.lambda.quantile(v.clamp(1e-300, 1.0)));
                Mark { xi, lambda }
            }
        }
    }
}

/// One marked site: the gap leading to it and the drift it hands to its left neighbour mark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mark {
    pub xi: u64,
    pub lambda: f64,
}

#[derive(Debug, Clone)]
enum MarkSource {
    Sampled { spec: ModelSpec, seed: u64 },
    Fixed { pos: Vec<Mark>, neg: Vec<Mark>, fill: Mark },
}

/// A two-sided, lazily extended window of marks.
///
/// Mark `k` carries `xi_k = S_k - S_{k-1}` and `lambda_k`, the drift used at site `S_{k-1}`.
#[derive(Debug, Clone)]
pub struct EnvBlock {
    source: MarkSource,
    pos: Vec<Mark>,
    pos_s: Vec<i64>,
    neg: Vec<Mark>,
    neg_s: Vec<i64>,
}

impl EnvBlock {
    /// Empty lazy window over a sampled environment.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self, EnvError> {
        spec.validate()?;
        Ok(Self::with_source(MarkSource::Sampled { spec, seed }))
    }

    /// Sampled environment realized at least over `k_lo..=k_hi`.
    pub fn sample(spec: ModelSpec, k_lo: i64, k_hi: i64, seed: u64) -> Result<Self, EnvError> {
        if k_lo > k_hi {
            return Err(EnvError::EmptyRange);
        }
        let mut env = Self::new(spec, seed)?;
        env.ensure_k_max(k_hi);
        env.ensure_k_min(k_lo);
        Ok(env)
    }

    /// Explicit marks for `k = 1, 2, ...` (`pos`) and `k = 0, -1, ...` (`neg`), then `fill` forever.
    ///
    /// Drifts equal to 1 are accepted here, which allows deterministic test environments.
    pub fn fixed(pos: Vec<Mark>, neg: Vec<Mark>, fill: Mark) -> Result<Self, EnvError> {
        for m in pos.iter().chain(neg.iter()).chain(core::iter::once(&fill)) {
            if m.xi == 0 {
                return Err(invalid("gaps must be >= 1"));
            }
            if !(m.lambda > 0.0 && m.lambda <= 1.0) {
                return Err(invalid("explicit drifts must lie in (0, 1]"));
            }
        }
        Ok(Self::with_source(MarkSource::Fixed { pos, neg, fill }))
    }

    /// Every mark equal to `(xi, lambda)`.
    pub fn constant(xi: u64, lambda: f64) -> Result<Self, EnvError> {
        Self::fixed(Vec::new(), Vec::new(), Mark { xi, lambda })
    }

    fn with_source(source: MarkSource) -> Self {
        EnvBlock {
            source,
            pos: Vec::new(),
            pos_s: Vec::new(),
            neg: Vec::new(),
            neg_s: Vec::new(),
        }
    }

    /// The sampled law and seed, when the window is sampled.
    pub fn seed_path(&self) -> Option<(ModelSpec, u64)> {
        match &self.source {
            MarkSource::Sampled { spec, seed } => Some((*spec, *seed)),
            MarkSource::Fixed { .. } => None,
        }
    }

    pub fn k_max(&self) -> i64 {
        self.pos.len() as i64
    }

    pub fn k_min(&self) -> i64 {
        1 - self.neg.len() as i64
    }

    fn chunk(&self, stream: u64, start: usize, out: &mut Vec<Mark>) {
        match &self.source {
            MarkSource::Sampled { spec, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(stream);
                for _ in 0..CHUNK {
                    out.push(spec.sample_mark(&mut rng));
                }
            }
            MarkSource::Fixed { pos, neg, fill } => {
                let list = if stream % 2 == 0 { pos } else { neg };
                for i in start..start + CHUNK {
                    out.push(*list.get(i).unwrap_or(fill));
                }
            }
        }
    }

    /// Realize marks up to index `k`.
    pub fn ensure_k_max(&mut self, k: i64) {
        let mut buf = Vec::with_capacity(CHUNK);
        while self.k_max() < k {
            let start = self.pos.len();
            buf.clear();
            self.chunk(2 * (start / CHUNK) as u64, start, &mut buf);
            for m in &buf {
                let prev = self.pos_s.last().copied().unwrap_or(0);
                self.pos_s.push(prev.saturating_add(m.xi as i64));
                self.pos.push(*m);
            }
        }
    }

    /// Realize marks down to index `k`.
    pub fn ensure_k_min(&mut self, k: i64) {
        let mut buf = Vec::with_capacity(CHUNK);
        while self.k_min() > k {
            let start = self.neg.len();
            buf.clear();
            self.chunk(2 * (start / CHUNK) as u64 + 1, start, &mut buf);
            for m in &buf {
                let prev = self.neg_s.last().copied().unwrap_or(0);
                self.neg_s.push(prev.saturating_sub(m.xi as i64));
                self.neg.push(*m);
            }
        }
    }

    /// Extend until `omega` at `site` is determined.
    pub fn ensure_site(&mut self, site: i64) {
        if site >= 0 {
            while self.pos_s.last().is_none_or(|&s| s <= site) {
                let k = self.k_max() + 1;
                self.ensure_k_max(k);
            }
        } else {
            while self.neg_s.last().is_none_or(|&s| s > site) {
                let k = self.k_min() - 1;
                self.ensure_k_min(k);
            }
        }
    }

    /// `S_k`; `k` must satisfy `-(neg realized) <= k <= k_max`.
    #[inline]
    pub fn s(&self, k: i64) -> i64 {
        if k > 0 {
            self.pos_s[(k - 1) as usize]
        } else if k == 0 {
            0
        } else {
            self.neg_s[(-k - 1) as usize]
        }
    }

    /// Mark `k`, which must be realized.
    #[inline]
    pub fn mark(&self, k: i64) -> Mark {
        if k >= 1 {
            self.pos[(k - 1) as usize]
        } else {
            self.neg[(-k) as usize]
        }
    }

    /// Mark `k`, realizing it if necessary.
    pub fn mark_mut(&mut self, k: i64) -> Mark {
        self.ensure_k_max(k);
        self.ensure_k_min(k);
        self.mark(k)
    }

    /// `S_k`, realizing it if necessary.
    pub fn s_mut(&mut self, k: i64) -> i64 {
        self.ensure_k_max(k);
        self.ensure_k_min(k + 1);
        self.s(k)
    }

    /// Sites for which `omega` is determined by the realized window.
    pub fn site_span(&self) -> (i64, i64) {
        let lo = self.neg_s.last().copied().unwrap_or(0);
        let hi = self.pos_s.last().copied().unwrap_or(0) - 1;
        (lo, hi)
    }

    /// Index `k` with `S_k <= site < S_{k+1}`; the window must cover `site`.
    pub fn mark_floor(&self, site: i64) -> i64 {
        if site >= 0 {
            // number of positive marks with S_k <= site
            self.pos_s.partition_point(|&s| s <= site) as i64
        } else {
            // neg_s is decreasing: S_{-1} > S_{-2} > ...
            let j = self.neg_s.partition_point(|&s| s > site);
            -(j as i64) - 1
        }
    }

    /// `k` with `S_k = site`, if the site is marked.
    pub fn mark_index_at(&self, site: i64) -> Option<i64> {
        if site < self.neg_s.last().copied().unwrap_or(0) {
            return None;
        }
        let k = self.mark_floor(site);
        (self.s(k) == site).then_some(k)
    }

    /// Drift at `site`, or the window-extension signal.
    pub fn omega_at(&self, site: i64) -> Result<f64, EnvError> {
        let (lo, hi) = self.site_span();
        if site < lo || site > hi {
            return Err(EnvError::OutOfWindow { site, lo, hi });
        }
        let k = self.mark_floor(site);
        if self.s(k) == site {
            Ok(self.mark(k + 1).lambda)
        } else {
            Ok(0.5)
        }
    }

    /// Drift at `site`, extending the window when needed.
    pub fn omega(&mut self, site: i64) -> f64 {
        self.ensure_site(site);
        self.omega_at(site).expect("window extended")
    }

    /// `nu(n) = inf{k : S_k > n}` for `n >= 0`.
    pub fn nu(&mut self, n: i64) -> i64 {
        self.ensure_site(n.max(0));
        self.pos_s.partition_point(|&s| s <= n) as i64 + 1
    }

    /// Realized marks in `k_lo..=k_hi` as `(k, xi, lambda, S_k)`.
    pub fn rows(&mut self, k_lo: i64, k_hi: i64) -> Vec<(i64, u64, f64, i64)> {
        self.ensure_k_max(k_hi);
        self.ensure_k_min(k_lo);
        (k_lo..=k_hi)
            .map(|k| {
                let m = self.mark(k);
                (k, m.xi, m.lambda, self.s(k))
            })
            .collect()
    }
}

/// Sparsity class by the support / integrability of `xi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparsityClass {
    Weak,
    Moderate,
    Strong,
}

/// Moments entering the speed formula; infinite values are `f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub e_xi: f64,
    pub e_xi2: f64,
    pub e_rho: f64,
    pub e_rho_xi: f64,
    pub e_log_rho: f64,
    /// Standard error when `e_rho_xi` came from simulation.
    pub numeric_se: Option<f64>,
}

/// `sum_{k >= 0} w(k) f(k)` for a decreasing tail `f`, summed to `2^20` then integrated.
fn tail_series<F: Fn(f64) -> f64, W: Fn(f64) -> f64>(f: F, w: W) -> f64 {
    const K: u64 = 1 << 20;
    let mut s = 0.0;
    for k in 0..K {
        let x = k as f64;
        s += w(x) * f(x);
    }
    let a = math::ln(K as f64);
    let integrand = |y: f64| {
        let t = math::exp(y);
        t * w(t) * f(t)
    };
    s + math::simpson(integrand, a, a + 200.0, 20_000) - 0.5 * w(K as f64) * f(K as f64)
}

fn xi_moments(spec: &ModelSpec) -> (f64, f64) {
    match spec.xi {
        XiLaw::Constant { value } => (value as f64, (value as f64) * (value as f64)),
        XiLaw::ShiftedGeometric { p } => (1.0 / p, (2.0 - p) / (p * p)),
        XiLaw::Pareto { slowly } => {
            let tail = ParetoTail {
                beta: spec.beta,
                slowly,
            };
            let vanishing_p = match slowly {
                SlowlyVarying::LogVanishing { p } => p,
                _ => 0.0,
            };
            let finite = |order: f64| {
                spec.beta > order || (spec.beta == order && vanishing_p > 1.0)
            };
            let e1 = if finite(1.0) {
                tail_series(|t| tail.xi_survival(t), |_| 1.0)
            } else {
                f64::INFINITY
            };
            let e2 = if finite(2.0) {
                tail_series(|t| tail.xi_survival(t), |t| 2.0 * t + 1.0)
            } else {
                f64::INFINITY
            };
            (e1, e2)
        }
    }
}

/// Moments of `(xi, rho)`; closed forms where available, otherwise a fixed-seed simulation.
pub fn moments(spec: &ModelSpec) -> Moments {
    let (e_xi, e_xi2) = xi_moments(spec);
    let e_rho = spec.lambda.e_rho_pow(1.0);
    let e_log_rho = spec.lambda.e_log_rho();
    let (e_rho_xi, numeric_se) = match spec.coupling {
        Coupling::Independent => (e_rho * e_xi, None),
        Coupling::RankCoupled { .. } => {
            if !e_xi2.is_finite() || !e_rho.is_finite() {
                (f64::INFINITY, None)
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(0x005e_ed0f_e7a5);
                let n = 10_000_000u64;
                let (mut s, mut s2) = (0.0, 0.0);
                for _ in 0..n {
                    let m = spec.sample_mark(&mut rng);
                    let v = rho(m.lambda) * m.xi as f64;
                    s += v;
                    s2 += v * v;
                }
                let mean = s / n as f64;
                let var = (s2 / n as f64 - mean * mean).max(0.0);
                (mean, Some(math::sqrt(var / n as f64)))
            }
        }
    };
    Moments {
        e_xi,
        e_xi2,
        e_rho,
        e_rho_xi,
        e_log_rho,
        numeric_se,
    }
}

/// Speed from moments; zero whenever the formula's integrability conditions fail.
pub fn speed_from_moments(m: &Moments) -> f64 {
    if m.e_rho < 1.0 && m.e_rho_xi.is_finite() && m.e_xi2.is_finite() {
        let num = (1.0 - m.e_rho) * m.e_xi;
        let den = (1.0 - m.e_rho) * m.e_xi2 + 2.0 * m.e_rho_xi * m.e_xi;
        num / den
    } else {
        0.0
    }
}

/// Sparsity class and asymptotic speed.
pub fn classify_and_speed(spec: &ModelSpec) -> (SparsityClass, f64, Moments) {
    let m = moments(spec);
    let class = match spec.xi {
        XiLaw::Constant { .. } => SparsityClass::Weak,
        _ if m.e_xi.is_finite() => SparsityClass::Moderate,
        _ => SparsityClass::Strong,
    };
    (class, speed_from_moments(&m), m)
}

/// Result of solving `E rho^alpha = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlphaSolution {
    Root { alpha: f64 },
    /// `E rho^x < 1` on all probed `x` in `(0, rho2_upper]`.
    NoRoot { rho2_upper: f64 },
}

impl AlphaSolution {
    pub fn alpha(&self) -> Option<f64> {
        match *self {
            AlphaSolution::Root { alpha } => Some(alpha),
            AlphaSolution::NoRoot { .. } => None,
        }
    }
}

/// Largest exponent probed by [`solve_alpha`].
pub const ALPHA_PROBE_MAX: f64 = 64.0;

/// Positive root of `E rho^x = 1` by bracketing and bisection.
pub fn solve_alpha(spec: &ModelSpec, tol: f64) -> Result<AlphaSolution, EnvError> {
    let law = spec.lambda;
    let elog = law.e_log_rho();
    if !(elog < 0.0) {
        return Err(EnvError::NotTransient(elog));
    }
    let f = |x: f64| law.e_rho_pow(x) - 1.0;
    // probe 2^-6, 2^-5, ..., 64
    let mut prev = 0.0;
    let mut x = 1.0 / 64.0;
    let mut bracket = None;
    while x <= ALPHA_PROBE_MAX {
        let v = f(x);
        if !v.is_finite() {
            // locate where the moment stops being below 1
            let edge = math::bisect(
                |y| {
                    let w = f(y);
                    if w.is_finite() && w < 0.0 {
                        -1.0
                    } else {
                        1.0
                    }
                },
                prev,
                x,
                200,
            );
            let w = f(edge);
            if w.is_finite() && w.abs() <= tol.max(1e-9) {
                return Ok(AlphaSolution::Root { alpha: edge });
            }
            return Err(EnvError::DivergingMoment(edge));
        }
        if v >= 0.0 {
            bracket = Some((prev, x));
            break;
        }
        prev = x;
        x *= 2.0;
    }
    let Some((mut lo, hi)) = bracket else {
        return Ok(AlphaSolution::NoRoot {
            rho2_upper: ALPHA_PROBE_MAX,
        });
    };
    if lo == 0.0 {
        // the dip below 1 happens before the first probe
        lo = hi;
        while f(lo) >= 0.0 {
            lo *= 0.5;
            if lo < 1e-300 {
                return Ok(AlphaSolution::Root { alpha: 0.0 });
            }
        }
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let v = f(mid);
        if v < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
        if v.abs() <= tol * 1e-3 || b - a <= 1e-15 * b {
            break;
        }
    }
    Ok(AlphaSolution::Root { alpha: 0.5 * (a + b) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn pareto(beta: f64, lambda: f64) -> ModelSpec {
        ModelSpec {
            xi: XiLaw::Pareto {
                slowly: SlowlyVarying::Const { c: 1.0 },
            },
            lambda: LambdaLaw::Constant { value: lambda },
            coupling: Coupling::Independent,
            beta,
            alpha_hint: None,
        }
    }

    fn constant(xi: u64, lambda: f64) -> ModelSpec {
        ModelSpec {
            xi: XiLaw::Constant { value: xi },
            lambda: LambdaLaw::Constant { value: lambda },
            coupling: Coupling::Independent,
            beta: 1.0,
            alpha_hint: None,
        }
    }

    #[test]
    fn constant_marks_and_prefix() {
        let env = EnvBlock::sample(constant(2, 0.3), 1, 2, 7).unwrap();
        assert_eq!(env.mark(1), Mark { xi: 2, lambda: 0.3 });
        assert_eq!(env.mark(2), Mark { xi: 2, lambda: 0.3 });
        assert_eq!((env.s(0), env.s(1), env.s(2)), (0, 2, 4));
    }

    #[test]
    fn lazy_extension_keeps_earlier_marks() {
        let spec = pareto(0.5, 0.6);
        let a = EnvBlock::sample(spec, 1, 2, 99).unwrap();
        let b = EnvBlock::sample(spec, 1, 3, 99).unwrap();
        let mut c = EnvBlock::new(spec, 99).unwrap();
        c.ensure_k_min(-700);
        c.ensure_k_max(900);
        for k in 1..=2 {
            assert_eq!(a.mark(k), b.mark(k));
            assert_eq!(a.mark(k), c.mark(k));
        }
        let d = EnvBlock::sample(spec, -700, 900, 99).unwrap();
        for k in -700..=900 {
            assert_eq!(c.mark(k), d.mark(k));
            assert_eq!(c.s(k), d.s(k));
        }
    }

    #[test]
    fn rejects_degenerate_drift() {
        assert!(EnvBlock::new(constant(1, 1.0), 0).is_err());
        assert!(EnvBlock::new(constant(1, 0.0), 0).is_err());
        let two = ModelSpec {
            lambda: LambdaLaw::TwoPoint {
                values: [0.2, 1.0],
                p_first: 0.5,
            },
            ..constant(1, 0.5)
        };
        assert!(EnvBlock::new(two, 0).is_err());
        assert_eq!(
            EnvBlock::sample(constant(1, 0.5), 3, 2, 0).unwrap_err(),
            EnvError::EmptyRange
        );
    }

    #[test]
    fn omega_reads_lambda_of_next_mark() {
        let env = EnvBlock::fixed(
            alloc::vec![Mark { xi: 2, lambda: 0.3 }, Mark { xi: 3, lambda: 0.7 }],
            Vec::new(),
            Mark { xi: 5, lambda: 0.5 },
        );
        let mut env = env.unwrap();
        env.ensure_site(6);
        assert_eq!(env.omega_at(0).unwrap(), 0.3);
        assert_eq!(env.omega_at(2).unwrap(), 0.7);
        assert_eq!(env.omega_at(1).unwrap(), 0.5);
        assert_eq!(env.omega_at(3).unwrap(), 0.5);
        assert!(matches!(
            env.omega_at(10_000),
            Err(EnvError::OutOfWindow { .. })
        ));
    }

    #[test]
    fn unit_gaps_mark_every_site() {
        let mut env = EnvBlock::sample(
            ModelSpec {
                lambda: LambdaLaw::Beta { a: 2.0, b: 3.0 },
                ..constant(1, 0.5)
            },
            -5,
            20,
            3,
        )
        .unwrap();
        for n in 0..20 {
            assert_eq!(env.omega(n), env.mark(n + 1).lambda);
        }
        for n in -5..0 {
            assert_eq!(env.omega(n), env.mark(n + 1).lambda);
        }
    }

    #[test]
    fn negative_side_prefix() {
        let env = EnvBlock::fixed(
            Vec::new(),
            alloc::vec![Mark { xi: 4, lambda: 0.2 }, Mark { xi: 1, lambda: 0.9 }],
            Mark { xi: 2, lambda: 0.5 },
        )
        .unwrap();
        let mut env = env;
        env.ensure_k_min(-3);
        // xi_0 = 4 gives S_{-1} = -4, xi_{-1} = 1 gives S_{-2} = -5
        assert_eq!(env.s(-1), -4);
        assert_eq!(env.s(-2), -5);
        assert_eq!(env.omega(-4), 0.2);
        assert_eq!(env.omega(-5), 0.9);
        assert_eq!(env.omega(-2), 0.5);
        assert_eq!(env.mark_index_at(-4), Some(-1));
        assert_eq!(env.mark_index_at(-3), None);
    }

    #[test]
    fn rho_arithmetic() {
        assert_eq!(rho(0.5), 1.0);
        assert!((rho(0.3) - 7.0 / 3.0).abs() < 1e-15);
        assert!((rho(0.7) - 3.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn speed_examples() {
        let (class, v, _) = classify_and_speed(&constant(1, 2.0 / 3.0));
        assert_eq!(class, SparsityClass::Weak);
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
        let (class, v, _) = classify_and_speed(&pareto(0.5, 0.3));
        assert_eq!(class, SparsityClass::Strong);
        assert_eq!(v, 0.0);
        let (_, v, _) = classify_and_speed(&constant(1, 1.0 / 3.0));
        assert_eq!(v, 0.0);
    }

    #[test]
    fn geometric_and_pareto_moments() {
        let spec = ModelSpec {
            xi: XiLaw::ShiftedGeometric { p: 0.25 },
            ..constant(1, 0.6)
        };
        let m = moments(&spec);
        assert!((m.e_xi - 4.0).abs() < 1e-12);
        assert!((m.e_xi2 - 1.75 / 0.0625).abs() < 1e-9);
        // ceil of Pareto(3): E xi = sum_{k>=0} P{xi>k} = 1 + zeta(3)
        let m = moments(&pareto(3.0, 0.6));
        assert!((m.e_xi - (1.0 + 1.202_056_903_159_594)).abs() < 1e-6, "{}", m.e_xi);
        assert!(m.e_xi2.is_finite());
        assert!(moments(&pareto(1.0, 0.6)).e_xi.is_infinite());
    }

    #[test]
    fn alpha_examples() {
        assert_eq!(
            solve_alpha(&constant(1, 2.0 / 3.0), 1e-10).unwrap(),
            AlphaSolution::NoRoot { rho2_upper: 64.0 }
        );
        let two = ModelSpec {
            lambda: LambdaLaw::two_point_rho(2.0, 0.5, 0.4568),
            ..constant(1, 0.5)
        };
        let a = solve_alpha(&two, 1e-12).unwrap().alpha().unwrap();
        assert!((a - 0.25).abs() < 1e-3, "{a}");
        let ln = ModelSpec {
            lambda: LambdaLaw::LogNormalRho {
                mu: -1.0,
                sigma: 1.0,
            },
            ..constant(1, 0.5)
        };
        let a = solve_alpha(&ln, 1e-12).unwrap().alpha().unwrap();
        assert!((a - 2.0).abs() < 1e-9, "{a}");
        assert!(matches!(
            solve_alpha(&constant(1, 0.4), 1e-9),
            Err(EnvError::NotTransient(_))
        ));
        // Beta(3.5, 0.3): the probe at x = 4 is infinite, the root sits in (2, 3.5)
        let beta = ModelSpec {
            lambda: LambdaLaw::Beta { a: 3.5, b: 0.3 },
            ..constant(1, 0.5)
        };
        let a = solve_alpha(&beta, 1e-12).unwrap().alpha().unwrap();
        let law = beta.lambda;
        let oracle = {
            let (mut lo, mut hi) = (2.0f64, 3.4999f64);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if law.e_rho_pow(mid) < 1.0 {
                    lo = mid
                } else {
                    hi = mid
                }
            }
            lo
        };
        assert!((a - oracle).abs() < 1e-9, "{a} vs {oracle}");
    }

    #[test]
    fn beta_moment_closed_form_matches_simulation() {
        let law = LambdaLaw::Beta { a: 4.0, b: 2.0 };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 400_000;
        let (mut s, mut sl) = (0.0, 0.0);
        for _ in 0..n {
            let l = law.sample(&mut rng);
            s += rho(l);
            sl += math::ln(rho(l));
        }
        assert!((s / n as f64 - law.e_rho_pow(1.0)).abs() < 0.01);
        assert!((sl / n as f64 - law.e_log_rho()).abs() < 0.01);
    }

    #[test]
    fn quantiles_are_monotone() {
        let laws = [
            LambdaLaw::Beta { a: 2.0, b: 5.0 },
            LambdaLaw::LogNormalRho {
                mu: -0.5,
                sigma: 0.7,
            },
            LambdaLaw::two_point_rho(2.0, 0.5, 0.3),
        ];
        for law in laws {
            let mut prev = 0.0;
            for i in 1..100 {
                let q = law.quantile(i as f64 / 100.0);
                assert!(q >= prev && q > 0.0 && q < 1.0);
                prev = q;
            }
        }
        let xi = XiLaw::Pareto {
            slowly: SlowlyVarying::LogVanishing { p: 2.0 },
        };
        let mut prev = 0;
        for i in 0..100 {
            let q = xi.quantile(i as f64 / 100.0, 0.7);
            assert!(q >= prev && q >= 1);
            prev = q;
        }
    }

    #[test]
    fn log_factor_inverse_roundtrip() {
        for slowly in [
            SlowlyVarying::LogGrowing { p: 0.4 },
            SlowlyVarying::LogVanishing { p: 1.5 },
            SlowlyVarying::Const { c: 3.0 },
        ] {
            let tail = ParetoTail { beta: 0.6, slowly };
            for &u in &[0.9, 0.1, 1e-4, 1e-9] {
                let t = tail.inverse_survival(u);
                assert!((tail.survival(t) / u - 1.0).abs() < 1e-9);
            }
        }
    }
}
