//! Empirical distribution tools: ECDF, KS distance, Hill estimator, tail ratios, Laplace checks.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("empty sample")]
    Empty,
    #[error("sample contains a nonpositive or non-finite value")]
    NonPositive,
    #[error("k = {k} must satisfy 1 <= k < n/2 (n = {n})")]
    InvalidK { k: usize, n: usize },
    #[error("all top order statistics coincide")]
    Degenerate,
    #[error("only {count} exceedances above t = {t}; at least {needed} required")]
    InsufficientTail { t: f64, count: usize, needed: usize },
    #[error("weights must be nonnegative with a positive sum and match the sample length")]
    BadWeights,
}

/// Sorted sample with an optional weight vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EcdfSummary {
    sorted: Vec<f64>,
    /// Cumulative normalized weights aligned with `sorted`.
    cum: Option<Vec<f64>>,
}

impl EcdfSummary {
    pub fn new(mut sample: Vec<f64>) -> Self {
        sample.sort_unstable_by(f64::total_cmp);
        EcdfSummary {
            sorted: sample,
            cum: None,
        }
    }

    pub fn weighted(sample: Vec<f64>, weights: Vec<f64>) -> Result<Self, StatsError> {
        if sample.len() != weights.len() || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(StatsError::BadWeights);
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(StatsError::BadWeights);
        }
        let mut pairs: Vec<(f64, f64)> = sample.into_iter().zip(weights).collect();
        pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let mut acc = 0.0;
        let mut cum = Vec::with_capacity(pairs.len());
        let mut sorted = Vec::with_capacity(pairs.len());
        for (x, w) in pairs {
            acc += w / total;
            sorted.push(x);
            cum.push(acc);
        }
        if let Some(last) = cum.last_mut() {
            *last = 1.0;
        }
        Ok(EcdfSummary {
            sorted,
            cum: Some(cum),
        })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// Right-continuous `F(x) = P{X <= x}`.
    pub fn eval(&self, x: f64) -> f64 {
        let i = self.sorted.partition_point(|v| v.total_cmp(&x).is_le());
        self.mass_below_index(i)
    }

    /// `P{X < x}`.
    pub fn eval_left(&self, x: f64) -> f64 {
        let i = self.sorted.partition_point(|v| v.total_cmp(&x).is_lt());
        self.mass_below_index(i)
    }

    fn mass_below_index(&self, i: usize) -> f64 {
        if i == 0 {
            return 0.0;
        }
        match &self.cum {
            None => i as f64 / self.sorted.len() as f64,
            Some(c) => c[i - 1],
        }
    }

    /// Lower empirical quantile.
    pub fn quantile(&self, p: f64) -> f64 {
        quantile_sorted(&self.sorted, p)
    }
}

/// Lower empirical quantile of a sorted slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let n = sorted.len();
    let idx = math::ceil(p.clamp(0.0, 1.0) * n as f64) as usize;
    sorted[idx.clamp(1, n) - 1]
}

/// Two-sample KS distance, exact over the merged jump points.
pub fn ks_distance(a: &EcdfSummary, b: &EcdfSummary) -> f64 {
    if a.is_empty() || b.is_empty() {
        return if a.is_empty() && b.is_empty() { 0.0 } else { 1.0 };
    }
    if a.cum.is_none() && b.cum.is_none() {
        let (xa, xb) = (&a.sorted, &b.sorted);
        let (na, nb) = (xa.len() as f64, xb.len() as f64);
        let (mut i, mut j) = (0usize, 0usize);
        let mut d: f64 = 0.0;
        while i < xa.len() && j < xb.len() {
            let x = if xa[i].total_cmp(&xb[j]).is_le() {
                xa[i]
            } else {
                xb[j]
            };
            while i < xa.len() && xa[i].total_cmp(&x).is_le() {
                i += 1;
            }
            while j < xb.len() && xb[j].total_cmp(&x).is_le() {
                j += 1;
            }
            d = d.max((i as f64 / na - j as f64 / nb).abs());
        }
        return d;
    }
    let mut d: f64 = 0.0;
    for &x in a.sorted.iter().chain(b.sorted.iter()) {
        d = d.max((a.eval(x) - b.eval(x)).abs());
    }
    d
}

/// KS distance between a sample and a continuous CDF.
pub fn ks_distance_cdf<F: Fn(f64) -> f64>(a: &EcdfSummary, cdf: F) -> f64 {
    let mut d: f64 = 0.0;
    let xs = &a.sorted;
    let mut i = 0;
    while i < xs.len() {
        let x = xs[i];
        let mut j = i;
        while j < xs.len() && xs[j].total_cmp(&x).is_le() {
            j += 1;
        }
        let f = cdf(x);
        d = d
            .max((a.mass_below_index(j) - f).abs())
            .max((a.mass_below_index(i) - f).abs());
        i = j;
    }
    d
}

/// Default number of upper order statistics: `round(n^0.6)`.
pub fn default_hill_k(n: usize) -> usize {
    math::round(math::powf(n as f64, 0.6)) as usize
}

/// Hill tail index with a bootstrap percentile interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HillEstimate {
    pub index: f64,
    pub k: usize,
    pub n: usize,
    pub ci_low: f64,
    pub ci_high: f64,
}

fn hill_point_in_place(buf: &mut [f64], k: usize) -> Result<f64, StatsError> {
    let n = buf.len();
    // put the (k+1)-th largest at position n-k-1 and the top k above it
    let pivot = n - k - 1;
    buf.select_nth_unstable_by(pivot, f64::total_cmp);
    let threshold = buf[pivot];
    let mut h = 0.0;
    for &x in &buf[pivot + 1..] {
        h += math::ln(x / threshold);
    }
    h /= k as f64;
    if !(h > 0.0) {
        return Err(StatsError::Degenerate);
    }
    Ok(1.0 / h)
}

/// Hill point estimate over the top `k` order statistics.
pub fn hill_index(sample: &[f64], k: usize) -> Result<f64, StatsError> {
    check_hill(sample, k)?;
    let mut buf = sample.to_vec();
    hill_point_in_place(&mut buf, k)
}

fn check_hill(sample: &[f64], k: usize) -> Result<(), StatsError> {
    let n = sample.len();
    if n == 0 {
        return Err(StatsError::Empty);
    }
    if k == 0 || 2 * k >= n {
        return Err(StatsError::InvalidK { k, n });
    }
    if sample.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(StatsError::NonPositive);
    }
    Ok(())
}

/// Hill estimate; `k = None` uses [`default_hill_k`]. `bootstrap = 0` skips the interval.
pub fn hill_estimator<R: Rng + ?Sized>(
    sample: &[f64],
    k: Option<usize>,
    bootstrap: usize,
    rng: &mut R,
) -> Result<HillEstimate, StatsError> {
    let n = sample.len();
    let k = k.unwrap_or_else(|| default_hill_k(n));
    check_hill(sample, k)?;
    let mut buf = sample.to_vec();
    let index = hill_point_in_place(&mut buf, k)?;
    let (mut ci_low, mut ci_high) = (f64::NAN, f64::NAN);
    if bootstrap > 0 {
        let mut reps = Vec::with_capacity(bootstrap);
        for _ in 0..bootstrap {
            for slot in buf.iter_mut() {
                *slot = sample[rng.random_range(0..n)];
            }
            if let Ok(v) = hill_point_in_place(&mut buf, k) {
                reps.push(v);
            }
        }
        reps.sort_unstable_by(f64::total_cmp);
        ci_low = quantile_sorted(&reps, 0.025);
        ci_high = quantile_sorted(&reps, 0.975);
    }
    Ok(HillEstimate {
        index,
        k,
        n,
        ci_low,
        ci_high,
    })
}

/// Plateau of `P^{X > t} / ref(t)` over a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioTail {
    pub plateau: f64,
    /// Largest relative deviation of a grid ratio from the plateau.
    pub flatness: f64,
    pub points: Vec<(f64, f64)>,
}

/// Minimum exceedances per grid point for [`ratio_tail_estimate`].
pub const MIN_EXCEEDANCES: usize = 100;

pub fn ratio_tail_estimate<F: Fn(f64) -> f64>(
    sample: &EcdfSummary,
    reference: F,
    t_grid: &[f64],
) -> Result<RatioTail, StatsError> {
    let n = sample.len();
    if n == 0 || t_grid.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut points = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let count = n - sample.sorted.partition_point(|v| v.total_cmp(&t).is_le());
        if count < MIN_EXCEEDANCES {
            return Err(StatsError::InsufficientTail {
                t,
                count,
                needed: MIN_EXCEEDANCES,
            });
        }
        points.push((t, (count as f64 / n as f64) / reference(t)));
    }
    let mut ratios: Vec<f64> = points.iter().map(|p| p.1).collect();
    ratios.sort_unstable_by(f64::total_cmp);
    let plateau = median_sorted(&ratios);
    let flatness = ratios
        .iter()
        .map(|r| (r / plateau - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(RatioTail {
        plateau,
        flatness,
        points,
    })
}

/// Thresholds whose exceedance counts run geometrically from `n * top_fraction` down to `min_exceed`.
pub fn upper_quantile_grid(
    sample: &EcdfSummary,
    points: usize,
    top_fraction: f64,
    min_exceed: usize,
) -> Vec<f64> {
    let n = sample.len();
    let hi = (n as f64 * top_fraction).max(min_exceed as f64);
    let lo = min_exceed as f64;
    if n <= min_exceed || points == 0 {
        return Vec::new();
    }
    let mut grid = Vec::with_capacity(points);
    for i in 0..points {
        let frac = if points == 1 {
            0.0
        } else {
            i as f64 / (points - 1) as f64
        };
        let m = math::round(math::exp(math::ln(hi) + frac * (math::ln(lo) - math::ln(hi)))) as usize;
        let m = m.clamp(min_exceed, n - 1);
        let t = sample.sorted[n - m - 1];
        if grid.last().is_none_or(|&last| t > last) {
            grid.push(t);
        }
    }
    grid
}

/// `|mean e^{-sX} - target(s)|` for each `s`.
pub fn laplace_check<F: Fn(f64) -> f64>(sample: &[f64], s_grid: &[f64], target: F) -> Vec<f64> {
    s_grid
        .iter()
        .map(|&s| {
            let m = sample.iter().map(|&x| math::exp(-s * x)).sum::<f64>() / sample.len() as f64;
            (m - target(s)).abs()
        })
        .collect()
}

pub fn mean(sample: &[f64]) -> f64 {
    sample.iter().sum::<f64>() / sample.len() as f64
}

/// Standard error of the sample mean.
pub fn std_err(sample: &[f64]) -> f64 {
    let n = sample.len() as f64;
    let m = mean(sample);
    let var = sample.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    math::sqrt(var / n)
}

pub fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub fn median(sample: &[f64]) -> f64 {
    let mut v = sample.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    median_sorted(&v)
}

/// Summary block `{metric, value, ci_low, ci_high, n, params}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    pub value: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub n: usize,
    pub params: BTreeMap<String, f64>,
}

impl MetricSummary {
    pub fn new(metric: &str, value: f64, n: usize) -> Self {
        MetricSummary {
            metric: String::from(metric),
            value,
            ci_low: None,
            ci_high: None,
            n,
            params: BTreeMap::new(),
        }
    }

    pub fn with_ci(mut self, lo: f64, hi: f64) -> Self {
        self.ci_low = Some(lo);
        self.ci_high = Some(hi);
        self
    }

    pub fn param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(String::from(key), value);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pareto_sample(alpha: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| math::powf(1.0 - rng.random::<f64>(), -1.0 / alpha))
            .collect()
    }

    #[test]
    fn ks_examples() {
        let a = EcdfSummary::new(vec![1.0, 2.0, 3.0]);
        assert_eq!(ks_distance(&a, &a.clone()), 0.0);
        let z = EcdfSummary::new(vec![0.0; 10]);
        let o = EcdfSummary::new(vec![1.0; 10]);
        assert_eq!(ks_distance(&z, &o), 1.0);
        let s = EcdfSummary::new(vec![0.25, 0.75]);
        let d = ks_distance_cdf(&s, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.25).abs() < 1e-15);
    }

    #[test]
    fn ks_handles_ties_and_weights() {
        let a = EcdfSummary::new(vec![1.0, 1.0, 2.0, 2.0]);
        let b = EcdfSummary::new(vec![1.0, 2.0]);
        assert_eq!(ks_distance(&a, &b), 0.0);
        let w = EcdfSummary::weighted(vec![1.0, 2.0], vec![3.0, 1.0]).unwrap();
        assert!((w.eval(1.0) - 0.75).abs() < 1e-15);
        assert!((ks_distance(&w, &b) - 0.25).abs() < 1e-15);
        assert!(EcdfSummary::weighted(vec![1.0], vec![-1.0]).is_err());
    }

    #[test]
    fn ecdf_right_continuity() {
        let e = EcdfSummary::new(vec![3.0, 1.0, 2.0]);
        assert_eq!(e.eval(0.5), 0.0);
        assert!((e.eval(1.0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((e.eval_left(2.0) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(e.eval(3.0), 1.0);
        assert_eq!(e.quantile(0.5), 2.0);
    }

    #[test]
    fn hill_on_exact_pareto() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = pareto_sample(2.0, 100_000, 1);
        let h = hill_estimator(&s, Some(1000), 200, &mut rng).unwrap();
        assert!(h.index > 1.8 && h.index < 2.2, "{h:?}");
        assert!(h.ci_low < h.index && h.index < h.ci_high);
        let s = pareto_sample(0.5, 100_000, 2);
        let h = hill_estimator(&s, Some(1000), 0, &mut rng).unwrap();
        assert!(h.index > 0.45 && h.index < 0.55, "{h:?}");
    }

    #[test]
    fn hill_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            hill_estimator(&[2.0; 100], Some(10), 0, &mut rng),
            Err(StatsError::Degenerate)
        );
        let mut s = pareto_sample(1.0, 100, 3);
        s[5] = 0.0;
        assert_eq!(hill_index(&s, 10), Err(StatsError::NonPositive));
        assert!(matches!(
            hill_index(&pareto_sample(1.0, 10, 3), 5),
            Err(StatsError::InvalidK { .. })
        ));
    }

    #[test]
    fn ratio_tail_self_reference() {
        let s = EcdfSummary::new(pareto_sample(0.7, 200_000, 4));
        let grid = upper_quantile_grid(&s, 12, 0.1, 200);
        let r = ratio_tail_estimate(&s, |t| math::powf(t, -0.7), &grid).unwrap();
        assert!((r.plateau - 1.0).abs() < 0.05, "{r:?}");
        assert!(r.flatness <= 0.1, "{r:?}");
        let err = ratio_tail_estimate(&s, |t| math::powf(t, -0.7), &[1e12]);
        assert!(matches!(err, Err(StatsError::InsufficientTail { .. })));
    }

    #[test]
    fn laplace_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s: Vec<f64> = (0..1_000_000)
            .map(|_| -math::ln(1.0 - rng.random::<f64>()))
            .collect();
        let g = laplace_check(&s, &[1.0], |s| 1.0 / (1.0 + s));
        assert!(g[0] <= 0.005);
        let g = laplace_check(&[0.0; 10], &[0.5, 3.0], |_| 1.0);
        assert_eq!(g, vec![0.0, 0.0]);
    }
}
