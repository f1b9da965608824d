//! Direct quenched simulation of the walk, the trap chain, and reflected first passage.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::environment::EnvBlock;

/// Default per-replica step cap.
pub const DEFAULT_STEP_CAP: u64 = 1_000_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkOptions {
    pub cap: u64,
    /// Times `m` at which `X_m` is recorded; need not be sorted.
    pub checkpoints: Vec<u64>,
    /// Keep the full trajectory (tests and trap-chain extraction only).
    pub record_path: bool,
}

impl Default for WalkOptions {
    fn default() -> Self {
        WalkOptions {
            cap: DEFAULT_STEP_CAP,
            checkpoints: Vec::new(),
            record_path: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkObservables {
    /// First passage time to the target, `None` when the cap was hit first.
    pub t_n: Option<u64>,
    pub capped: bool,
    /// Steps actually simulated.
    pub steps: u64,
    pub left_steps: u64,
    pub right_steps: u64,
    pub x_at: Vec<(u64, i64)>,
    pub min_site: i64,
    /// Number of times `m` with `X_m < 0`.
    pub steps_below_zero: u64,
    #[serde(skip)]
    pub path: Option<Vec<i64>>,
}

#[inline]
fn threshold(lambda: f64) -> u64 {
    (lambda * 18_446_744_073_709_551_616.0) as u64
}

/// Cursor state for the mark interval `[S_k, S_{k+1})` containing the walker.
struct Interval {
    k: i64,
    lo: i64,
    hi: i64,
    sure_right: bool,
    thr: u64,
}

impl Interval {
    fn load(env: &mut EnvBlock, k: i64) -> Self {
        env.ensure_k_max(k + 1);
        env.ensure_k_min(k + 1);
        let lambda = env.mark(k + 1).lambda;
        Interval {
            k,
            lo: env.s(k),
            hi: env.s(k + 1),
            sure_right: lambda >= 1.0,
            thr: threshold(lambda),
        }
    }
}

/// Run the walk from 0 until it reaches `n` and every checkpoint time has passed, or the cap.
pub fn run_walk<R: Rng + ?Sized>(
    env: &mut EnvBlock,
    n: i64,
    opts: &WalkOptions,
    rng: &mut R,
) -> WalkObservables {
    assert!(n >= 1, "target site must be positive");
    let mut cps = opts.checkpoints.clone();
    cps.sort_unstable();
    cps.dedup();
    let mut cp = 0usize;

    let mut x: i64 = 0;
    let mut t: u64 = 0;
    let mut iv = Interval::load(env, 0);
    let (mut left, mut right) = (0u64, 0u64);
    let mut min_site = 0i64;
    let mut below = 0u64;
    let mut t_n = None;
    let mut x_at = Vec::with_capacity(cps.len());
    let mut path = opts.record_path.then(|| alloc::vec![0i64]);
    let (mut bits, mut nbits) = (0u64, 0u32);
    let mut capped = false;

    loop {
        if x == n && t_n.is_none() {
            t_n = Some(t);
        }
        while cp < cps.len() && cps[cp] <= t {
            if cps[cp] == t {
                x_at.push((t, x));
            }
            cp += 1;
        }
        if t_n.is_some() && cp == cps.len() {
            break;
        }
        if t >= opts.cap {
            capped = true;
            break;
        }
        let step_right = if x == iv.lo {
            iv.sure_right || rng.next_u64() < iv.thr
        } else {
            if nbits == 0 {
                bits = rng.next_u64();
                nbits = 64;
            }
            let b = bits & 1 == 1;
            bits >>= 1;
            nbits -= 1;
            b
        };
        if step_right {
            x += 1;
            right += 1;
            if x == iv.hi {
                iv = Interval::load(env, iv.k + 1);
            }
        } else {
            if x == iv.lo {
                iv = Interval::load(env, iv.k - 1);
            }
            x -= 1;
            left += 1;
            if x < min_site {
                min_site = x;
            }
        }
        t += 1;
        if x < 0 {
            below += 1;
        }
        if let Some(p) = path.as_mut() {
            p.push(x);
        }
    }

    WalkObservables {
        t_n: if capped { None } else { t_n },
        capped,
        steps: t,
        left_steps: left,
        right_steps: right,
        x_at,
        min_site,
        steps_below_zero: below,
        path,
    }
}

/// Index of the last marked site visited, along a trajectory.
pub fn trap_chain(path: &[i64], env: &EnvBlock) -> Vec<i64> {
    let mut cur = 0i64;
    path.iter()
        .map(|&x| {
            if let Some(k) = env.mark_index_at(x) {
                cur = k;
            }
            cur
        })
        .collect()
}

/// Law of the first time `|SRW|` reaches `h`, started at 0.
#[derive(Debug, Clone)]
pub struct SrwExitTable {
    h: u64,
    /// `pmf[i] = P{T = h + 2i}`.
    pmf: Vec<f64>,
    alias: Option<WeightedAliasIndex<f64>>,
}

/// Tail mass left out of [`SrwExitTable`].
const EXIT_TAIL: f64 = 1e-17;

/// One step of the reflected chain on `{0, .., h-1}`; returns the mass absorbed at `h`.
fn reflected_step(p: &mut Vec<f64>, q: &mut Vec<f64>) -> f64 {
    let h = p.len();
    q.iter_mut().for_each(|v| *v = 0.0);
    let mut absorbed = 0.0;
    for (j, &m) in p.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        if j == 0 {
            if h == 1 {
                absorbed += m;
            } else {
                q[1] += m;
            }
            continue;
        }
        q[j - 1] += 0.5 * m;
        if j + 1 == h {
            absorbed += 0.5 * m;
        } else {
            q[j + 1] += 0.5 * m;
        }
    }
    core::mem::swap(p, q);
    absorbed
}

/// Exact probabilities `P{T'_h = t}` for `t < len`, computed on the reflected chain.
pub fn reflected_passage_pmf(h: u64, len: usize) -> Vec<f64> {
    let mut out = alloc::vec![0.0; len];
    if h == 0 {
        if len > 0 {
            out[0] = 1.0;
        }
        return out;
    }
    let mut p = alloc::vec![0.0f64; h as usize];
    let mut q = p.clone();
    p[0] = 1.0;
    for slot in out.iter_mut().skip(1) {
        *slot = reflected_step(&mut p, &mut q);
    }
    out
}

impl SrwExitTable {
    pub fn new(h: u64) -> Self {
        assert!(h >= 1);
        let mut p = alloc::vec![0.0f64; h as usize];
        let mut q = p.clone();
        p[0] = 1.0;
        let mut remaining = 1.0f64;
        let mut pmf = Vec::new();
        let mut t = 0u64;
        while remaining > EXIT_TAIL {
            t += 1;
            let absorbed = reflected_step(&mut p, &mut q);
            if t >= h && (t - h) % 2 == 0 {
                pmf.push(absorbed);
            }
            remaining -= absorbed;
        }
        let alias = (pmf.len() > 1)
            .then(|| WeightedAliasIndex::new(pmf.clone()).expect("valid weights"));
        SrwExitTable { h, pmf, alias }
    }

    pub fn level(&self) -> u64 {
        self.h
    }

    /// `(t, P{T = t})` over the stored support.
    pub fn pmf(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.pmf
            .iter()
            .enumerate()
            .map(move |(i, &p)| (self.h + 2 * i as u64, p))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match &self.alias {
            Some(a) => self.h + 2 * a.sample(rng) as u64,
            None => self.h,
        }
    }
}

/// Sampler of `T'_n`, the hitting time of `n` by the walk reflected at the origin.
///
/// Coarse-grains on the lattice `hZ` for the largest divisor `h <= 64` of `n`; the result is
/// exact in law because successive passages between multiples of `h` are iid `T'_h`.
#[derive(Debug, Clone)]
pub struct ReflectedPassage {
    n: u64,
    table: Option<SrwExitTable>,
}

impl ReflectedPassage {
    pub fn new(n: u64) -> Self {
        let h = (2..=64u64.min(n)).rev().find(|d| n % d == 0).unwrap_or(1);
        let table = (h > 1).then(|| SrwExitTable::new(h));
        ReflectedPassage { n, table }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match &self.table {
            None => direct_reflected(self.n, rng),
            Some(tab) => {
                let levels = self.n / tab.level();
                let mut level = 0u64;
                let mut t = 0u64;
                let (mut bits, mut nbits) = (0u64, 0u32);
                while level < levels {
                    t += tab.sample(rng);
                    if level == 0 {
                        level = 1;
                        continue;
                    }
                    if nbits == 0 {
                        bits = rng.next_u64();
                        nbits = 64;
                    }
                    if bits & 1 == 1 {
                        level += 1;
                    } else {
                        level -= 1;
                    }
                    bits >>= 1;
                    nbits -= 1;
                }
                t
            }
        }
    }
}

fn direct_reflected<R: Rng + ?Sized>(n: u64, rng: &mut R) -> u64 {
    let mut x = 0u64;
    let mut t = 0u64;
    let (mut bits, mut nbits) = (0u64, 0u32);
    while x < n {
        t += 1;
        if x == 0 {
            x = 1;
            continue;
        }
        if nbits == 0 {
            bits = rng.next_u64();
            nbits = 64;
        }
        if bits & 1 == 1 {
            x += 1;
        } else {
            x -= 1;
        }
        bits >>= 1;
        nbits -= 1;
    }
    t
}

/// One draw of `T'_n` by direct stepping of the reflected walk.
pub fn reflected_first_passage<R: Rng + ?Sized>(n: u64, rng: &mut R) -> u64 {
    direct_reflected(n, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::Mark;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn deterministic_right_drift() {
        let mut env = EnvBlock::constant(1, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [1, 5, 40] {
            let o = run_walk(&mut env, n, &WalkOptions::default(), &mut rng);
            assert_eq!(o.t_n, Some(n as u64));
        }
    }

    #[test]
    fn srw_first_step_probabilities() {
        // exhaustive: T_1 = 1 via R; T_1 = 3 via L,R,R
        let mut env = EnvBlock::constant(1, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let reps = 200_000;
        let (mut one, mut three) = (0, 0);
        let opts = WalkOptions {
            cap: 10_000,
            ..Default::default()
        };
        for _ in 0..reps {
            match run_walk(&mut env, 1, &opts, &mut rng).t_n {
                Some(1) => one += 1,
                Some(3) => three += 1,
                _ => {}
            }
        }
        let p1 = one as f64 / reps as f64;
        let p3 = three as f64 / reps as f64;
        assert!((p1 - 0.5).abs() < 0.005, "{p1}");
        assert!((p3 - 0.125).abs() < 0.003, "{p3}");
    }

    #[test]
    fn parity_and_identity() {
        let env0 = EnvBlock::fixed(
            vec![Mark { xi: 3, lambda: 0.7 }, Mark { xi: 2, lambda: 0.4 }],
            vec![Mark { xi: 2, lambda: 0.9 }],
            Mark { xi: 4, lambda: 0.6 },
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let mut env = env0.clone();
            let o = run_walk(&mut env, 17, &WalkOptions::default(), &mut rng);
            let t = o.t_n.unwrap();
            assert_eq!(t, 17 + 2 * o.left_steps);
            if o.min_site >= 0 {
                assert_eq!((t - 17) % 2, 0);
            }
        }
    }

    #[test]
    fn checkpoints_and_path() {
        let mut env = EnvBlock::constant(2, 0.8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let opts = WalkOptions {
            checkpoints: vec![10, 0, 3, 500],
            record_path: true,
            ..Default::default()
        };
        let o = run_walk(&mut env, 5, &opts, &mut rng);
        let path = o.path.unwrap();
        assert_eq!(o.x_at.len(), 4);
        for (m, x) in o.x_at {
            assert_eq!(path[m as usize], x);
        }
        assert!(o.steps >= 500);
        let below = path.iter().filter(|&&x| x < 0).count() as u64;
        assert_eq!(below, o.steps_below_zero);
    }

    #[test]
    fn cap_flags_replica() {
        let mut env = EnvBlock::constant(1, 0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let o = run_walk(
            &mut env,
            50,
            &WalkOptions {
                cap: 1000,
                ..Default::default()
            },
            &mut rng,
        );
        assert!(o.capped && o.t_n.is_none() && o.steps == 1000);
    }

    #[test]
    fn trap_chain_examples() {
        let env = EnvBlock::fixed(vec![Mark { xi: 2, lambda: 0.5 }], vec![], Mark {
            xi: 3,
            lambda: 0.5,
        })
        .unwrap();
        let mut env = env;
        env.ensure_site(10);
        env.ensure_site(-10);
        assert_eq!(trap_chain(&[0, 1, 2], &env), vec![0, 0, 1]);
        assert_eq!(trap_chain(&[0, 1, 0], &env), vec![0, 0, 0]);
    }

    #[test]
    fn holding_time_scales_quadratically() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut pts = Vec::new();
        for g in [4u64, 8, 16, 32] {
            let mut env = EnvBlock::constant(g, 0.8).unwrap();
            let o = run_walk(
                &mut env,
                (g * 300) as i64,
                &WalkOptions {
                    record_path: true,
                    ..Default::default()
                },
                &mut rng,
            );
            let chain = trap_chain(o.path.as_ref().unwrap(), &env);
            let mut holds = Vec::new();
            let mut start = 0usize;
            for i in 1..chain.len() {
                if chain[i] != chain[i - 1] {
                    holds.push((i - start) as f64);
                    start = i;
                }
            }
            let m = holds.iter().sum::<f64>() / holds.len() as f64;
            pts.push((libm::log(g as f64), libm::log(m)));
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        let slope = sxy / sxx;
        assert!((1.8..=2.2).contains(&slope), "{slope}");
    }

    #[test]
    fn reflected_small_levels() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert_eq!(reflected_first_passage(0, &mut rng), 0);
        assert_eq!(reflected_first_passage(1, &mut rng), 1);
        // E T'_2 from the two-state linear system E0 = 1 + E1, E1 = 1 + E0/2
        let e1 = (1.0 + 0.5) / 0.5;
        let e0 = 1.0 + e1;
        let reps = 400_000;
        let s: u64 = (0..reps).map(|_| reflected_first_passage(2, &mut rng)).sum();
        assert!((s as f64 / reps as f64 - e0).abs() < 0.03);
    }

    /// Probability mass of `T'_n` by depth-first enumeration of all paths.
    fn enumerate(n: i64, depth: usize) -> Vec<f64> {
        fn go(x: i64, t: usize, p: f64, n: i64, depth: usize, out: &mut Vec<f64>) {
            if x == n {
                out[t] += p;
                return;
            }
            if t == depth {
                return;
            }
            if x == 0 {
                go(1, t + 1, p, n, depth, out);
            } else {
                go(x + 1, t + 1, 0.5 * p, n, depth, out);
                go(x - 1, t + 1, 0.5 * p, n, depth, out);
            }
        }
        let mut out = vec![0.0; depth + 1];
        go(0, 0, 1.0, n, depth, &mut out);
        out
    }

    #[test]
    fn exit_table_matches_enumeration() {
        for n in 1..=4u64 {
            let exact = enumerate(n as i64, 22);
            let dp = reflected_passage_pmf(n, 23);
            for t in 0..=22 {
                assert!((exact[t] - dp[t]).abs() < 1e-14, "n={n} t={t}");
            }
            let tab = SrwExitTable::new(n);
            for (t, p) in tab.pmf().take_while(|(t, _)| *t <= 22) {
                assert!((p - exact[t as usize]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn reflected_passage_total_variation() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for n in 1..=4u64 {
            let pmf = reflected_passage_pmf(n, 4000);
            let reps = 200_000;
            let mut counts = vec![0u64; 4000];
            let coarse = ReflectedPassage::new(n);
            for _ in 0..reps {
                let t = coarse.sample(&mut rng) as usize;
                if t < counts.len() {
                    counts[t] += 1;
                }
            }
            let tv: f64 = 0.5
                * pmf
                    .iter()
                    .zip(&counts)
                    .map(|(p, &c)| (p - c as f64 / reps as f64).abs())
                    .sum::<f64>();
            assert!(tv <= 0.005, "n={n} tv={tv}");
        }
    }

    #[test]
    fn coarse_and_direct_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let coarse = ReflectedPassage::new(60);
        let reps = 20_000;
        let a: f64 = (0..reps).map(|_| coarse.sample(&mut rng) as f64).sum::<f64>() / reps as f64;
        let b: f64 =
            (0..reps).map(|_| direct_reflected(60, &mut rng) as f64).sum::<f64>() / reps as f64;
        // E T'_n = n^2 with sd about 0.8 n^2 / sqrt(reps)
        assert!((a / 3600.0 - 1.0).abs() < 0.03, "{a}");
        assert!((b / 3600.0 - 1.0).abs() < 0.03, "{b}");
    }
}
