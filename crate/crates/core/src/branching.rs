//! Branching-process engine: left-excursion counts, extinction blocks, and the `Y_n` correction.
//!
//! Counts are `u128` and saturate; a saturated sum is reported like a capped replica.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::environment::{rho, EnvBlock};
use crate::math;

/// Below this many trials a negative binomial is drawn as a sum of geometrics.
pub const CONVOLUTION_MAX: u128 = 32;
/// Fair-coin negative binomials up to this size are read off random bits.
const FAIR_BITS_MAX: u128 = 512;
/// Poisson means above this use the normal approximation.
const POISSON_NORMAL: f64 = 1e17;

/// Failures before the `r`-th success in Bernoulli(`p`) trials.
pub fn neg_binomial<R: Rng + ?Sized>(r: u128, p: f64, rng: &mut R) -> u128 {
    if r == 0 || p >= 1.0 {
        return 0;
    }
    if p == 0.5 && r <= FAIR_BITS_MAX {
        return fair_neg_binomial(r as u32, rng);
    }
    if r <= CONVOLUTION_MAX {
        let l = math::log1p(-p);
        let mut s = 0u128;
        for _ in 0..r {
            s += geometric_with_log(l, rng);
        }
        return s;
    }
    let scale = (1.0 - p) / p;
    let lam = Gamma::new(r as f64, scale)
        .expect("positive gamma parameters")
        .sample(rng);
    poisson(lam, rng)
}

/// `Geom0` draw given `ln(1 - p)`.
#[inline]
fn geometric_with_log<R: Rng + ?Sized>(ln_q: f64, rng: &mut R) -> u128 {
    let u = 1.0 - rng.random::<f64>();
    let g = math::floor(math::ln(u) / ln_q);
    if g >= 3.0e38 {
        u128::MAX
    } else {
        g as u128
    }
}

/// `Geom0(p)`: `P{l} = p (1-p)^l`.
pub fn geometric<R: Rng + ?Sized>(p: f64, rng: &mut R) -> u128 {
    if p >= 1.0 {
        return 0;
    }
    geometric_with_log(math::log1p(-p), rng)
}

fn fair_neg_binomial<R: Rng + ?Sized>(r: u32, rng: &mut R) -> u128 {
    let mut need = r;
    let mut fails = 0u128;
    loop {
        let w = rng.next_u64();
        let ones = w.count_ones();
        if ones < need {
            need -= ones;
            fails += (64 - ones) as u128;
        } else {
            let mut v = w;
            for _ in 1..need {
                v &= v - 1;
            }
            let pos = v.trailing_zeros();
            return fails + (pos + 1 - need) as u128;
        }
    }
}

fn poisson<R: Rng + ?Sized>(lam: f64, rng: &mut R) -> u128 {
    if lam <= 0.0 {
        return 0;
    }
    if lam < POISSON_NORMAL {
        let v: f64 = Poisson::new(lam).expect("finite mean").sample(rng);
        v as u128
    } else {
        let z: f64 = StandardNormal.sample(rng);
        to_count(lam + math::sqrt(lam) * z)
    }
}

fn to_count(x: f64) -> u128 {
    if x <= 0.0 {
        0
    } else if x >= 3.0e38 {
        u128::MAX
    } else {
        math::round(x) as u128
    }
}

/// Binomial draw for counts beyond `u64`.
pub fn binomial<R: Rng + ?Sized>(n: u128, q: f64, rng: &mut R) -> u128 {
    if n == 0 || q <= 0.0 {
        return 0;
    }
    if q >= 1.0 {
        return n;
    }
    if n <= u64::MAX as u128 {
        Binomial::new(n as u64, q).expect("valid binomial").sample(rng) as u128
    } else {
        let nf = n as f64;
        let z: f64 = StandardNormal.sample(rng);
        to_count(nf * q + math::sqrt(nf * q * (1.0 - q)) * z).min(n)
    }
}

/// Next generation size: `u` particles plus one immigrant, each with `Geom0(omega)` offspring.
pub fn nb_generation_step<R: Rng + ?Sized>(u: u128, omega: f64, rng: &mut R) -> u128 {
    neg_binomial(u.saturating_add(1), omega, rng)
}

/// Exact law of `m` critical `Geom0(1/2)` generations started from `z` particles.
///
/// Survivors are `Binomial(z, 1/(m+1))`, each with a `Geom(1/(m+1))` family on `{1, 2, ..}`;
/// immigration adds an independent `Geom0(1/(m+1))`.
pub fn critical_jump<R: Rng + ?Sized>(z: u128, m: u64, immigration: bool, rng: &mut R) -> u128 {
    if m == 0 {
        return z;
    }
    let q = 1.0 / (m as f64 + 1.0);
    let k = binomial(z, q, rng);
    let mut out = k.saturating_add(neg_binomial(k, q, rng));
    if immigration {
        out = out.saturating_add(geometric(q, rng));
    }
    out
}

/// Generation skipping inside critical stretches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipPolicy {
    /// Populations below this are stepped exactly.
    pub min_population: u128,
    /// A jump spans `population / ratio` generations.
    pub ratio: u128,
}

impl Default for SkipPolicy {
    fn default() -> Self {
        SkipPolicy {
            min_population: 1 << 16,
            ratio: 4096,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BranchingOptions {
    /// `None` keeps every generation exact.
    pub skip: Option<SkipPolicy>,
    /// Abandon a replica once the accumulated progeny exceeds this.
    pub sum_cap: Option<u128>,
}

impl BranchingOptions {
    pub fn exact() -> Self {
        BranchingOptions {
            skip: None,
            sum_cap: None,
        }
    }

    pub fn skipping() -> Self {
        BranchingOptions {
            skip: Some(SkipPolicy::default()),
            sum_cap: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RunEnd {
    Done,
    Capped,
}

/// Advance `len` critical generations, adding each generation size to `sum`.
fn critical_run<R: Rng + ?Sized>(
    z: &mut u128,
    len: u64,
    immigration: bool,
    opts: &BranchingOptions,
    sum: &mut u128,
    rng: &mut R,
) -> RunEnd {
    let cap = opts.sum_cap.unwrap_or(u128::MAX);
    let mut left = len;
    while left > 0 {
        if !immigration && *z == 0 {
            return RunEnd::Done;
        }
        if let Some(sp) = opts.skip {
            if *z >= sp.min_population {
                let m = (*z / sp.ratio).min(left as u128) as u64;
                if m >= 2 {
                    let z0 = *z;
                    let z1 = critical_jump(z0, m, immigration, rng);
                    // trapezoid for the generations in between
                    let approx = m as f64 * z0 as f64
                        + (z1 as f64 - z0 as f64) * (m as f64 + 1.0) * 0.5;
                    *sum = sum.saturating_add(to_count(approx));
                    *z = z1;
                    left -= m;
                    if *sum > cap || *sum == u128::MAX {
                        return RunEnd::Capped;
                    }
                    continue;
                }
            }
        }
        *z = if immigration {
            nb_generation_step(*z, 0.5, rng)
        } else {
            neg_binomial(*z, 0.5, rng)
        };
        *sum = sum.saturating_add(*z);
        left -= 1;
        if *sum > cap || *sum == u128::MAX {
            return RunEnd::Capped;
        }
    }
    RunEnd::Done
}

/// Position in the walk-side recursion, which runs from site `n - 1` downwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationCursor {
    pub u: u128,
    /// Site whose count `u` is.
    pub i: i64,
    pub below_zero_mode: bool,
}

impl GenerationCursor {
    /// Cursor standing at site `n` with `U_n = 0`.
    pub fn start(n: i64) -> Self {
        GenerationCursor {
            u: 0,
            i: n,
            below_zero_mode: n <= 0,
        }
    }

    /// Move to site `i - 1` with drift `omega` there.
    pub fn step<R: Rng + ?Sized>(&mut self, omega: f64, rng: &mut R) -> u128 {
        self.i -= 1;
        self.below_zero_mode = self.i < 0;
        self.u = if self.below_zero_mode {
            neg_binomial(self.u, omega, rng)
        } else {
            nb_generation_step(self.u, omega, rng)
        };
        self.u
    }
}

/// One draw of `T_n` from the branching representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HitSample {
    /// `n + 2 * (sum_nonneg + sum_neg)`, `None` when capped or saturated.
    pub t_n: Option<u128>,
    pub capped: bool,
    /// Left steps from sites `0..n`.
    pub sum_nonneg: u128,
    /// Left steps from negative sites.
    pub sum_neg: u128,
}

/// `T_n` via the excursion recursion: immigration on sites `n-1..=0`, none below 0.
pub fn hitting_time_branching<R: Rng + ?Sized>(
    env: &mut EnvBlock,
    n: i64,
    opts: &BranchingOptions,
    rng: &mut R,
) -> HitSample {
    assert!(n >= 1, "target site must be positive");
    let mut sums = [0u128; 2];
    let mut u: u128 = 0;
    env.ensure_site(n - 1);
    let mut k = env.mark_floor(n - 1);
    let mut upper = n - 1;
    let mut capped = false;
    let total_cap = opts.sum_cap.unwrap_or(u128::MAX);
    'outer: loop {
        let sk = env.s_mut(k);
        let lambda = env.mark_mut(k + 1).lambda;
        let imm = sk >= 0;
        let slot = if imm { 0 } else { 1 };
        if upper > sk {
            let mut local = 0u128;
            let sub = BranchingOptions {
                sum_cap: Some(total_cap.saturating_sub(sums[0].saturating_add(sums[1]))),
                ..*opts
            };
            let end = critical_run(&mut u, (upper - sk) as u64, imm, &sub, &mut local, rng);
            sums[slot] = sums[slot].saturating_add(local);
            if end == RunEnd::Capped {
                capped = true;
                break 'outer;
            }
        }
        u = if imm {
            nb_generation_step(u, lambda, rng)
        } else {
            neg_binomial(u, lambda, rng)
        };
        sums[slot] = sums[slot].saturating_add(u);
        let total = sums[0].saturating_add(sums[1]);
        if total > total_cap || total == u128::MAX {
            capped = true;
            break;
        }
        if !imm && u == 0 {
            break;
        }
        if sk == 0 && u == 0 {
            break;
        }
        upper = sk - 1;
        k -= 1;
    }
    let total = sums[0].saturating_add(sums[1]);
    let t_n = if capped {
        None
    } else {
        total
            .checked_mul(2)
            .and_then(|v| v.checked_add(n as u128))
    };
    HitSample {
        capped: capped || t_n.is_none(),
        t_n,
        sum_nonneg: sums[0],
        sum_neg: sums[1],
    }
}

/// One extinction block of the forward process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub tau_increment: u64,
    pub s_increment: u64,
    pub w_bar: u128,
    /// Progeny of immigrants that arrived inside each gap.
    pub w0: u128,
    /// Progeny of particles alive at the previous marked generation.
    pub w_down: u128,
    /// Sizes of the marked generations.
    pub z_sum: u128,
}

/// Forward process `Z` split into blocks at marked generations where it is empty.
pub struct ZBlocks<'a, R: Rng + ?Sized> {
    env: &'a mut EnvBlock,
    rng: &'a mut R,
    opts: BranchingOptions,
    max_marks: i64,
    next_mark: i64,
    z_prev: u128,
    pending: BlockRecord,
    generation_sum: u128,
}

const EMPTY_BLOCK: BlockRecord = BlockRecord {
    tau_increment: 0,
    s_increment: 0,
    w_bar: 0,
    w0: 0,
    w_down: 0,
    z_sum: 0,
};

/// Block stream over marks `1..=max_marks`; the trailing incomplete block is not emitted.
pub fn z_blocks<'a, R: Rng + ?Sized>(
    env: &'a mut EnvBlock,
    max_marks: u64,
    opts: BranchingOptions,
    rng: &'a mut R,
) -> ZBlocks<'a, R> {
    ZBlocks {
        env,
        rng,
        opts: BranchingOptions {
            sum_cap: None,
            ..opts
        },
        max_marks: max_marks as i64,
        next_mark: 1,
        z_prev: 0,
        pending: EMPTY_BLOCK,
        generation_sum: 0,
    }
}

impl<R: Rng + ?Sized> ZBlocks<'_, R> {
    /// `sum_{k <= S_i} Z_k` for the last simulated marked generation `S_i`.
    pub fn generation_sum(&self) -> u128 {
        self.generation_sum
    }

    /// The block under construction.
    pub fn pending(&self) -> BlockRecord {
        self.pending
    }

    /// Marks simulated so far.
    pub fn marks_done(&self) -> i64 {
        self.next_mark - 1
    }
}

impl<R: Rng + ?Sized> Iterator for ZBlocks<'_, R> {
    type Item = BlockRecord;

    fn next(&mut self) -> Option<BlockRecord> {
        while self.next_mark <= self.max_marks {
            let i = self.next_mark;
            let xi = self.env.mark_mut(i).xi;
            let lambda = self.env.mark_mut(i + 1).lambda;
            let interior = xi - 1;
            let b = &mut self.pending;

            let mut old = self.z_prev;
            let mut w_down = 0u128;
            critical_run(&mut old, interior, false, &self.opts, &mut w_down, self.rng);
            let mut fresh = 0u128;
            let mut w0 = 0u128;
            critical_run(&mut fresh, interior, true, &self.opts, &mut w0, self.rng);
            let z = neg_binomial(
                old.saturating_add(fresh).saturating_add(1),
                lambda,
                self.rng,
            );

            b.tau_increment += 1;
            b.s_increment += xi;
            b.w0 = b.w0.saturating_add(w0);
            b.w_down = b.w_down.saturating_add(w_down);
            b.z_sum = b.z_sum.saturating_add(z);
            b.w_bar = b.w0.saturating_add(b.w_down).saturating_add(b.z_sum);
            self.generation_sum = self
                .generation_sum
                .saturating_add(w0)
                .saturating_add(w_down)
                .saturating_add(z);
            self.z_prev = z;
            self.next_mark += 1;
            if z == 0 {
                let done = *b;
                *b = EMPTY_BLOCK;
                return Some(done);
            }
        }
        None
    }
}

/// `W^crit_n`: total progeny of the first `n` critical generations with unit immigration.
pub fn critical_total_progeny<R: Rng + ?Sized>(n: u64, rng: &mut R) -> u128 {
    let mut z = 0u128;
    let mut w = 0u128;
    for _ in 0..n {
        z = nb_generation_step(z, 0.5, rng);
        w += z;
    }
    w
}

/// Closed-form quenched mean of the correction `Y_n`.
pub fn quenched_mean_y(env: &mut EnvBlock, n: i64) -> f64 {
    let nu = env.nu(n);
    let s = env.s(nu - 1);
    if n == s {
        return 0.0;
    }
    // acc = sum_{m < nu} xi_m rho_{m+1} .. rho_{nu-1};  prod = rho_1 .. rho_{nu-1}
    let mut acc = 0.0;
    let mut prod = 1.0;
    for m in (1..nu).rev() {
        let mk = env.mark_mut(m);
        acc += mk.xi as f64 * prod;
        prod *= rho(mk.lambda);
    }
    let rho_nu = rho(env.mark_mut(nu).lambda);
    (n - s) as f64 * (prod * rho_nu + rho_nu * acc)
}

/// One draw of `Y_n`: the extra left steps from sites `0..=S_{nu(n)-1}` made after `T_{S_{nu(n)-1}}`.
pub fn sample_y<R: Rng + ?Sized>(env: &mut EnvBlock, n: i64, rng: &mut R) -> u128 {
    let nu = env.nu(n);
    let s = env.s(nu - 1);
    if n == s {
        return 0;
    }
    let mut cur = GenerationCursor::start(n);
    while cur.i > s {
        let omega = env.omega(cur.i - 1);
        cur.step(omega, rng);
    }
    let mut d = cur.u;
    let mut y = d;
    let mut site = s;
    while site > 0 && d > 0 {
        site -= 1;
        d = neg_binomial(d, env.omega(site), rng);
        y = y.saturating_add(d);
    }
    y
}

/// Left-step counts per site from a direct trajectory, for cross-checks.
pub fn excursion_counts(path: &[i64], lo: i64, hi: i64) -> Vec<u64> {
    let mut out = alloc::vec![0u64; (hi - lo + 1) as usize];
    for w in path.windows(2) {
        if w[1] < w[0] && w[0] >= lo && w[0] <= hi {
            out[(w[0] - lo) as usize] += 1;
        }
    }
    out
}
