//! Normalizing functions for Pareto-type gap tails and positive-stable sampling.
//!
//! All functions use the continuous tail representative `ParetoTail::survival`.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::environment::{ModelSpec, ParetoTail, SlowlyVarying};
use crate::math;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HeavyTailError {
    #[error("the gap law has no Pareto-type tail")]
    NotPareto,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Fixed-point iterations allowed for the conjugate `pi*`.
pub const CONJUGATE_ITERS: usize = 50;

/// Evaluator of the normalizing functions at arbitrary points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailFunctions {
    pub tail: ParetoTail,
    /// Exponent for `lambda`, `kappa` and `c2`.
    pub alpha: Option<f64>,
}

impl TailFunctions {
    pub fn new(spec: &ModelSpec, alpha: Option<f64>) -> Result<Self, HeavyTailError> {
        let tail = spec.pareto_tail().ok_or(HeavyTailError::NotPareto)?;
        if !(tail.beta > 0.0 && tail.beta <= 1.0) {
            return Err(HeavyTailError::InvalidParameter(alloc::format!(
                "beta = {} outside (0, 1]",
                tail.beta
            )));
        }
        if let Some(a) = alpha {
            if !(a > 0.0 && a.is_finite()) {
                return Err(HeavyTailError::InvalidParameter(alloc::format!(
                    "alpha = {a} must be positive"
                )));
            }
        }
        Ok(TailFunctions { tail, alpha })
    }

    pub fn beta(&self) -> f64 {
        self.tail.beta
    }

    pub fn survival(&self, t: f64) -> f64 {
        self.tail.survival(t)
    }

    /// `a(t)` with `t P{xi > a(t)} = 1`.
    pub fn a(&self, t: f64) -> f64 {
        if t <= 1.0 {
            return self.tail.lower();
        }
        self.tail.inverse_survival(1.0 / t)
    }

    /// Truncated mean `m(t) = int_0^t P{xi > u} du`.
    pub fn m(&self, t: f64) -> f64 {
        let x0 = self.tail.lower();
        if t <= x0 {
            return t.max(0.0);
        }
        let b = self.tail.beta;
        match self.tail.slowly {
            SlowlyVarying::Const { c } => {
                if b < 1.0 {
                    x0 + c * (math::powf(t, 1.0 - b) - math::powf(x0, 1.0 - b)) / (1.0 - b)
                } else {
                    x0 + c * math::ln(t / x0)
                }
            }
            SlowlyVarying::LogGrowing { p } => 1.0 + log_integral(b, p, math::ln(t)),
            SlowlyVarying::LogVanishing { p } => 1.0 + log_integral(b, -p, math::ln(t)),
        }
    }

    /// `pi(t) = m(a(t))`.
    pub fn pi(&self, t: f64) -> f64 {
        self.m(self.a(t))
    }

    /// De Bruijn conjugate of `pi` by fixed-point iteration; the flag is `false` when the
    /// iteration did not settle and the root of `x pi(t x) = 1` was used instead.
    pub fn pi_star(&self, t: f64) -> (f64, bool) {
        let mut x = 1.0;
        for _ in 0..CONJUGATE_ITERS {
            let next = 1.0 / self.pi(t * x);
            if (next - x).abs() <= 1e-12 * x {
                return (next, true);
            }
            x = next;
        }
        // x pi(t x) is increasing in x
        let g = |ly: f64| {
            let y = math::exp(ly);
            math::ln(y * self.pi(t * y))
        };
        let (mut lo, mut hi) = (-1.0, 1.0);
        while g(lo) > 0.0 {
            lo *= 2.0;
        }
        while g(hi) < 0.0 {
            hi *= 2.0;
        }
        (math::exp(math::bisect(g, lo, hi, 200)), false)
    }

    /// `lambda(t)`, inverse of `s -> P{xi > s}^(-1/alpha)`.
    pub fn lambda(&self, t: f64) -> Option<f64> {
        let alpha = self.alpha?;
        if t <= 1.0 {
            return Some(self.tail.lower());
        }
        Some(self.tail.inverse_survival(math::powf(t, -alpha)))
    }

    /// The drift threshold paired with `t^(1/2)`-sized gaps.
    pub fn c1(&self, t: f64) -> f64 {
        if self.tail.beta < 1.0 {
            t
        } else {
            self.a(t * self.pi_star(t).0)
        }
    }

    /// The drift threshold paired with `t^(alpha/beta)`-sized gaps.
    pub fn c2(&self, t: f64) -> Option<f64> {
        let alpha = self.alpha?;
        Some(if self.tail.beta < 1.0 {
            math::powf(self.survival(t), -1.0 / alpha) / t
        } else {
            math::powf(t * self.pi_star(t).0, 1.0 / alpha) / t
        })
    }

    /// Scale of `T_n` in the first `beta = 1` regime: `a(n pi*(n))^2`.
    pub fn scale_quadratic(&self, n: f64) -> f64 {
        let a = self.a(n * self.pi_star(n).0);
        a * a
    }

    /// Scale of `T_n` in the second `beta = 1` regime: `(n pi*(n))^(1/alpha)`.
    pub fn scale_alpha(&self, n: f64) -> Option<f64> {
        let alpha = self.alpha?;
        Some(math::powf(n * self.pi_star(n).0, 1.0 / alpha))
    }
}

/// `int_0^L e^{(1-beta) s} (1+s)^q ds`.
fn log_integral(beta: f64, q: f64, l: f64) -> f64 {
    if l <= 0.0 {
        return 0.0;
    }
    if beta >= 1.0 {
        let e = 1.0 + q;
        return if e.abs() < 1e-12 {
            math::ln(1.0 + l)
        } else {
            (math::powf(1.0 + l, e) - 1.0) / e
        };
    }
    let panels = (64.0 + 32.0 * l * (1.0 - beta + 0.5)) as usize;
    math::simpson(
        |s| math::exp((1.0 - beta) * s) * math::powf(1.0 + s, q),
        0.0,
        l,
        panels,
    )
}

/// `n` log-spaced points over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (math::ln(lo), math::ln(hi));
    (0..n)
        .map(|i| {
            if n == 1 {
                lo
            } else {
                math::exp(a + (b - a) * i as f64 / (n - 1) as f64)
            }
        })
        .collect()
}

/// 512 log-spaced points over `[1, 1e9]`.
pub fn default_grid() -> Vec<f64> {
    log_grid(1.0, 1e9, 512)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Column {
    Survival,
    A,
    M,
    Pi,
    PiStar,
    Lambda,
    W,
    Kappa,
    C1,
    C2,
}

impl Column {
    pub const ALL: [Column; 10] = [
        Column::Survival,
        Column::A,
        Column::M,
        Column::Pi,
        Column::PiStar,
        Column::Lambda,
        Column::W,
        Column::Kappa,
        Column::C1,
        Column::C2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Column::Survival => "survival",
            Column::A => "a",
            Column::M => "m",
            Column::Pi => "pi",
            Column::PiStar => "pi_star",
            Column::Lambda => "lambda",
            Column::W => "w",
            Column::Kappa => "kappa",
            Column::C1 => "c1",
            Column::C2 => "c2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizerRow {
    pub t: f64,
    pub survival: f64,
    pub a: f64,
    pub m: f64,
    pub pi: f64,
    pub pi_star: f64,
    /// `false` when the conjugate came from the bisection fallback.
    pub pi_star_converged: bool,
    pub lambda: Option<f64>,
    pub w: f64,
    pub kappa: Option<f64>,
    pub c1: f64,
    pub c2: Option<f64>,
}

impl NormalizerRow {
    pub fn get(&self, c: Column) -> Option<f64> {
        match c {
            Column::Survival => Some(self.survival),
            Column::A => Some(self.a),
            Column::M => Some(self.m),
            Column::Pi => Some(self.pi),
            Column::PiStar => Some(self.pi_star),
            Column::Lambda => self.lambda,
            Column::W => Some(self.w),
            Column::Kappa => self.kappa,
            Column::C1 => Some(self.c1),
            Column::C2 => self.c2,
        }
    }
}

/// Tabulated normalizers with log-log interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizerTable {
    pub functions: TailFunctions,
    pub rows: Vec<NormalizerRow>,
    /// First row from which the `beta = 1` thresholds are positive and increasing.
    pub first_valid: usize,
}

/// Tabulate every normalizer on `t_grid` (ascending, positive).
pub fn build_normalizers(
    spec: &ModelSpec,
    alpha: Option<f64>,
    t_grid: &[f64],
) -> Result<NormalizerTable, HeavyTailError> {
    if t_grid.is_empty() || t_grid.iter().any(|t| !(*t > 0.0)) {
        return Err(HeavyTailError::InvalidParameter("grid must be positive".into()));
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(HeavyTailError::InvalidParameter("grid must be increasing".into()));
    }
    let f = TailFunctions::new(spec, alpha)?;
    let mut rows: Vec<NormalizerRow> = t_grid
        .iter()
        .map(|&t| {
            let (ps, ok) = f.pi_star(t);
            let c1 = if f.beta() < 1.0 { t } else { f.a(t * ps) };
            let c2 = alpha.map(|al| {
                if f.beta() < 1.0 {
                    math::powf(f.survival(t), -1.0 / al) / t
                } else {
                    math::powf(t * ps, 1.0 / al) / t
                }
            });
            NormalizerRow {
                t,
                survival: f.survival(t),
                a: f.a(t),
                m: f.m(t),
                pi: f.pi(t),
                pi_star: ps,
                pi_star_converged: ok,
                lambda: f.lambda(t),
                w: 0.0,
                kappa: None,
                c1,
                c2,
            }
        })
        .collect();

    // w and kappa invert s -> a(s pi*(s))^2 and s -> (s pi*(s))^(1/alpha); pi* off the grid
    // comes from log-log interpolation of the column just built.
    let ts: Vec<f64> = rows.iter().map(|r| math::ln(r.t)).collect();
    let ps: Vec<f64> = rows.iter().map(|r| math::ln(r.pi_star)).collect();
    let pstar = |s: f64| math::exp(interp_loglog(&ts, &ps, math::ln(s)));
    let sq = |s: f64| {
        let a = f.a(s * pstar(s));
        a * a
    };
    for r in rows.iter_mut() {
        r.w = increasing_inverse(sq, r.t);
        r.kappa = alpha.map(|al| increasing_inverse(|s| math::powf(s * pstar(s), 1.0 / al), r.t));
    }

    let first_valid = if f.beta() < 1.0 {
        0
    } else {
        // last index where c1 or c2 fails to be positive and increasing, plus one
        let mut start = 0;
        for i in 1..rows.len() {
            let bad_c1 = !(rows[i].c1 > 0.0 && rows[i].c1 > rows[i - 1].c1);
            let bad_c2 = match (rows[i].c2, rows[i - 1].c2) {
                (Some(x), Some(y)) => !(x > 0.0 && x > y),
                _ => false,
            };
            if bad_c1 || bad_c2 {
                start = i + 1;
            }
        }
        start.min(rows.len())
    };
    Ok(NormalizerTable {
        functions: f,
        rows,
        first_valid,
    })
}

/// Solve `g(s) = target` for increasing `g` by bisection in `ln s`.
fn increasing_inverse<G: Fn(f64) -> f64>(g: G, target: f64) -> f64 {
    let lt = math::ln(target);
    let h = |ls: f64| math::ln(g(math::exp(ls))) - lt;
    let (mut lo, mut hi) = (-1.0, 1.0);
    let mut guard = 0;
    while h(lo) > 0.0 && guard < 12 {
        lo *= 2.0;
        guard += 1;
    }
    guard = 0;
    while h(hi) < 0.0 && guard < 12 {
        hi *= 2.0;
        guard += 1;
    }
    math::exp(math::bisect(h, lo, hi, 200))
}

/// Piecewise-linear interpolation with linear extrapolation from the end segments.
fn interp_loglog(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if n == 1 {
        return ys[0];
    }
    let j = xs.partition_point(|&v| v <= x).clamp(1, n - 1);
    let (x0, x1, y0, y1) = (xs[j - 1], xs[j], ys[j - 1], ys[j]);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

impl NormalizerTable {
    pub fn grid(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r.t)
    }

    /// Column value at `t` by log-log interpolation; `None` for absent columns.
    pub fn interp(&self, column: Column, t: f64) -> Option<f64> {
        let mut xs = Vec::with_capacity(self.rows.len());
        let mut ys = Vec::with_capacity(self.rows.len());
        for r in &self.rows {
            let v = r.get(column)?;
            if v > 0.0 {
                xs.push(math::ln(r.t));
                ys.push(math::ln(v));
            }
        }
        if xs.is_empty() {
            return None;
        }
        Some(math::exp(interp_loglog(&xs, &ys, math::ln(t))))
    }

    /// Least-squares slope of `ln column` against `ln t` over `[lo, hi]`.
    pub fn loglog_slope(&self, column: Column, lo: f64, hi: f64) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.t >= lo && r.t <= hi)
            .filter_map(|r| r.get(column).filter(|v| *v > 0.0).map(|v| (math::ln(r.t), math::ln(v))))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        Some(sxy / sxx)
    }

    /// Largest `|pi(t) pi*(t pi(t)) - 1|` over rows with `t >= t_min`.
    pub fn conjugate_defect(&self, t_min: f64) -> f64 {
        let f = &self.functions;
        self.rows
            .iter()
            .filter(|r| r.t >= t_min)
            .map(|r| {
                let p = f.pi(r.t);
                (p * f.pi_star(r.t * p).0 - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Largest relative error of `a(w pi*(w))^2` against `t`, `w = w(t)`, over rows with `t >= t_min`.
    pub fn inverse_defect(&self, t_min: f64) -> f64 {
        let f = &self.functions;
        self.rows
            .iter()
            .skip(self.first_valid)
            .filter(|r| r.t >= t_min)
            .map(|r| (f.scale_quadratic(r.w) / r.t - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Positive `beta`-stable draw with `E exp(-s sigma) = exp(-s^beta)` (Kanter's representation).
pub fn kanter_stable<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> f64 {
    assert!(beta > 0.0 && beta < 1.0, "stable index must lie in (0, 1)");
    loop {
        let u = math::PI * rng.random::<f64>();
        if u <= 0.0 {
            continue;
        }
        let e: f64 = Exp1.sample(rng);
        let head = math::sin(beta * u) / math::powf(math::sin(u), 1.0 / beta);
        let tail = math::powf(math::sin((1.0 - beta) * u) / e, (1.0 - beta) / beta);
        let s = head * tail;
        if s > 0.0 && s.is_finite() {
            return s;
        }
    }
}

/// Laplace exponent scale `c Gamma(1 - beta)` of a subordinator with Levy tail `c x^-beta`.
pub fn laplace_scale(beta: f64, c: f64) -> f64 {
    c * math::gamma(1.0 - beta)
}

/// Value at time `t` of the drift-free stable subordinator with Levy tail `c x^-beta`.
pub fn subordinator_marginal<R: Rng + ?Sized>(beta: f64, c: f64, t: f64, rng: &mut R) -> f64 {
    if t <= 0.0 || c <= 0.0 {
        return 0.0;
    }
    math::powf(t * laplace_scale(beta, c), 1.0 / beta) * kanter_stable(beta, rng)
}

/// Limit of `m(t) U(t) / t` for the renewal function `U` of gaps with tail index `beta`.
pub fn renewal_constant(beta: f64) -> f64 {
    1.0 / (math::gamma(2.0 - beta) * math::gamma(1.0 + beta))
}

/// Mean of the first-passage time over level 1 of the subordinator with tail `x^-beta`.
pub fn passage_time_mean(beta: f64) -> f64 {
    1.0 / (math::gamma(1.0 - beta) * math::gamma(1.0 + beta))
}
