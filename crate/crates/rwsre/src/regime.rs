//! Classification of a model into the limit-theorem regimes.

use rwsre_core::environment::{rho, solve_alpha, AlphaSolution, LambdaLaw, ModelSpec, SlowlyVarying, XiLaw};
use serde::Serialize;
use thiserror::Error;

/// Tolerance for treating the Cramer exponent as equal to `beta / 2`.
pub const CRITICAL_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum RegimeError {
    #[error("gap law is not regularly varying; only the Pareto family qualifies")]
    NotRegularlyVarying,
    #[error("walk is not transient to the right: E log rho = {0}")]
    NotTransient(f64),
    #[error("{scenario} requires {requirement}; {found}")]
    Violated {
        scenario: &'static str,
        requirement: &'static str,
        found: String,
    },
}

/// Long-run behaviour of the slowly varying factor of the gap tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SlowTrend {
    Growing,
    Converging { limit: f64 },
    Vanishing,
}

pub fn slow_trend(spec: &ModelSpec) -> Option<SlowTrend> {
    match spec.xi {
        XiLaw::Pareto { slowly } => Some(match slowly {
            SlowlyVarying::Const { c } => SlowTrend::Converging { limit: c },
            SlowlyVarying::LogGrowing { p } if p > 0.0 => SlowTrend::Growing,
            SlowlyVarying::LogVanishing { p } if p > 0.0 => SlowTrend::Vanishing,
            _ => SlowTrend::Converging { limit: 1.0 },
        }),
        _ => None,
    }
}

/// Which quantity dominates the hitting time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regime {
    /// `E rho^(beta/2) < 1`: long gaps dominate.
    GapDominated,
    /// Cramer exponent `beta / 2` with a growing slowly varying factor.
    BalancedGrowing,
    /// Cramer exponent `beta / 2` with a slowly varying factor tending to `limit`.
    BalancedConverging { limit: f64 },
    /// Cramer exponent `beta / 2` with a vanishing slowly varying factor.
    BalancedVanishing,
    /// Cramer exponent below `beta / 2`: traps dominate.
    TrapDominated,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::GapDominated => "gap_dominated",
            Regime::BalancedGrowing => "balanced_growing",
            Regime::BalancedConverging { .. } => "balanced_converging",
            Regime::BalancedVanishing => "balanced_vanishing",
            Regime::TrapDominated => "trap_dominated",
        }
    }

    /// Regimes with the quadratic normalization.
    pub fn is_quadratic(&self) -> bool {
        matches!(
            self,
            Regime::GapDominated | Regime::BalancedGrowing | Regime::BalancedConverging { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeInfo {
    pub regime: Regime,
    pub beta: f64,
    /// `E rho^(beta/2)`.
    pub half_beta_moment: f64,
    /// Root of `E rho^x = 1` when one exists.
    pub alpha: Option<f64>,
    pub nonarithmetic: bool,
}

/// Whether `log rho` lives on a lattice `h Z`.
pub fn log_rho_is_arithmetic(law: &LambdaLaw) -> bool {
    match *law {
        LambdaLaw::Constant { .. } => true,
        LambdaLaw::TwoPoint { values, p_first } => {
            if p_first <= 0.0 || p_first >= 1.0 {
                return true;
            }
            let (a, b) = (rho(values[0]).ln(), rho(values[1]).ln());
            if a == 0.0 || b == 0.0 {
                return true;
            }
            rational_with_small_denominator(a / b, 1000, 1e-9)
        }
        LambdaLaw::Beta { .. } | LambdaLaw::LogNormalRho { .. } => false,
    }
}

fn rational_with_small_denominator(x: f64, max_den: i64, tol: f64) -> bool {
    // continued-fraction convergents
    let (mut h0, mut h1) = (0i64, 1i64);
    let (mut k0, mut k1) = (1i64, 0i64);
    let mut r = x;
    for _ in 0..40 {
        let a = r.floor();
        let ai = a as i64;
        let (h2, k2) = (ai * h1 + h0, ai * k1 + k0);
        if k2.abs() > max_den {
            return false;
        }
        if (x - h2 as f64 / k2 as f64).abs() <= tol * x.abs().max(1.0) {
            return true;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = r - a;
        if frac.abs() < 1e-15 {
            return true;
        }
        r = 1.0 / frac;
    }
    false
}

pub fn classify(spec: &ModelSpec) -> Result<RegimeInfo, RegimeError> {
    let trend = slow_trend(spec).ok_or(RegimeError::NotRegularlyVarying)?;
    let beta = spec.beta;
    let elog = spec.lambda.e_log_rho();
    if !(elog < 0.0) {
        return Err(RegimeError::NotTransient(elog));
    }
    let half_beta_moment = spec.lambda.e_rho_pow(beta / 2.0);
    let alpha = match solve_alpha(spec, 1e-12) {
        Ok(AlphaSolution::Root { alpha }) => Some(alpha),
        _ => None,
    };
    let nonarithmetic = !log_rho_is_arithmetic(&spec.lambda);
    let regime = if half_beta_moment < 1.0 && alpha.is_none_or(|a| a > beta / 2.0 + CRITICAL_TOL) {
        Regime::GapDominated
    } else {
        match alpha {
            Some(a) if (a - beta / 2.0).abs() <= CRITICAL_TOL => match trend {
                SlowTrend::Growing => Regime::BalancedGrowing,
                SlowTrend::Converging { limit } => Regime::BalancedConverging { limit },
                SlowTrend::Vanishing => Regime::BalancedVanishing,
            },
            Some(_) => Regime::TrapDominated,
            None => {
                return Err(RegimeError::Violated {
                    scenario: "classification",
                    requirement: "E rho^x = 1 to have a positive root when E rho^(beta/2) >= 1",
                    found: format!("E rho^(beta/2) = {half_beta_moment} and no root was found"),
                })
            }
        }
    };
    Ok(RegimeInfo {
        regime,
        beta,
        half_beta_moment,
        alpha,
        nonarithmetic,
    })
}

fn describe(info: &RegimeInfo) -> String {
    let alpha = info
        .alpha
        .map_or_else(|| "no root of E rho^x = 1".to_string(), |a| format!("alpha = {a}"));
    format!(
        "E rho^(beta/2) = {}, {alpha}, beta = {}, regime {}",
        info.half_beta_moment,
        info.beta,
        info.regime.name()
    )
}

fn needs_nonarithmetic(
    scenario: &'static str,
    info: &RegimeInfo,
) -> Result<(), RegimeError> {
    if info.regime != Regime::GapDominated && !info.nonarithmetic {
        return Err(RegimeError::Violated {
            scenario,
            requirement: "log rho to be non-lattice when E rho^alpha = 1 is used",
            found: "log rho is supported on a lattice".to_string(),
        });
    }
    Ok(())
}

/// Hypotheses of the quadratic-normalization theorem (`beta < 1`, or `= 1` when `unit_beta`).
pub fn check_quadratic(
    spec: &ModelSpec,
    scenario: &'static str,
    unit_beta: bool,
) -> Result<RegimeInfo, RegimeError> {
    let info = classify(spec)?;
    check_beta(scenario, spec.beta, unit_beta)?;
    if !info.regime.is_quadratic() {
        return Err(RegimeError::Violated {
            scenario,
            requirement: "E rho^(beta/2) < 1, or E rho^alpha = 1 at alpha = beta/2 with a non-vanishing slowly varying factor",
            found: describe(&info),
        });
    }
    needs_nonarithmetic(scenario, &info)?;
    Ok(info)
}

/// Hypotheses of the trap-dominated theorem (`beta < 1`, or `= 1` when `unit_beta`).
pub fn check_trap(
    spec: &ModelSpec,
    scenario: &'static str,
    unit_beta: bool,
) -> Result<RegimeInfo, RegimeError> {
    let info = classify(spec)?;
    check_beta(scenario, spec.beta, unit_beta)?;
    if !matches!(info.regime, Regime::TrapDominated | Regime::BalancedVanishing) {
        return Err(RegimeError::Violated {
            scenario,
            requirement: "E rho^alpha = 1 with alpha < beta/2, or alpha = beta/2 with a vanishing slowly varying factor",
            found: describe(&info),
        });
    }
    needs_nonarithmetic(scenario, &info)?;
    Ok(info)
}

fn check_beta(scenario: &'static str, beta: f64, unit_beta: bool) -> Result<(), RegimeError> {
    if unit_beta && beta != 1.0 {
        return Err(RegimeError::Violated {
            scenario,
            requirement: "beta = 1",
            found: format!("beta = {beta}"),
        });
    }
    if !unit_beta && !(beta < 1.0) {
        return Err(RegimeError::Violated {
            scenario,
            requirement: "beta < 1",
            found: format!("beta = {beta}"),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(beta: f64, lambda: LambdaLaw, slowly: SlowlyVarying) -> ModelSpec {
        ModelSpec {
            xi: XiLaw::Pareto { slowly },
            lambda,
            coupling: Default::default(),
            beta,
            alpha_hint: None,
        }
    }

    fn two_point(hi: f64, lo: f64, alpha: f64) -> LambdaLaw {
        let p = (1.0 - lo.powf(alpha)) / (hi.powf(alpha) - lo.powf(alpha));
        LambdaLaw::two_point_rho(hi, lo, p)
    }

    #[test]
    fn lattice_detection() {
        assert!(log_rho_is_arithmetic(&LambdaLaw::two_point_rho(2.0, 0.5, 0.3)));
        assert!(log_rho_is_arithmetic(&LambdaLaw::two_point_rho(4.0, 0.5, 0.3)));
        assert!(!log_rho_is_arithmetic(&LambdaLaw::two_point_rho(2.0, 1.0 / 3.0, 0.3)));
        assert!(log_rho_is_arithmetic(&LambdaLaw::Constant { value: 0.7 }));
        assert!(!log_rho_is_arithmetic(&LambdaLaw::Beta { a: 3.0, b: 1.0 }));
    }

    #[test]
    fn gap_dominated_constant_drift() {
        let s = spec(0.5, LambdaLaw::Constant { value: 2.0 / 3.0 }, SlowlyVarying::Const { c: 1.0 });
        let info = check_quadratic(&s, "theorem1", false).unwrap();
        assert_eq!(info.regime, Regime::GapDominated);
        assert!(check_trap(&s, "theorem2", false).is_err());
        assert!(check_quadratic(&s, "theorem3", true).is_err());
    }

    #[test]
    fn trap_dominated_two_point() {
        let s = spec(0.75, two_point(50.0, 0.001, 0.25), SlowlyVarying::Const { c: 0.3 });
        let info = check_trap(&s, "theorem2", false).unwrap();
        assert_eq!(info.regime, Regime::TrapDominated);
        assert!((info.alpha.unwrap() - 0.25).abs() < 1e-9);
        let err = check_quadratic(&s, "theorem1", false).unwrap_err();
        assert!(err.to_string().contains("E rho^(beta/2) < 1"), "{err}");
    }

    #[test]
    fn balanced_cases_follow_slowly_varying_factor() {
        let law = two_point(2.0, 1.0 / 3.0, 0.25);
        let g = spec(0.5, law, SlowlyVarying::LogGrowing { p: 0.2 });
        assert_eq!(classify(&g).unwrap().regime, Regime::BalancedGrowing);
        let v = spec(0.5, law, SlowlyVarying::LogVanishing { p: 1.0 });
        assert_eq!(classify(&v).unwrap().regime, Regime::BalancedVanishing);
        assert!(check_trap(&v, "theorem2", false).is_ok());
        let c = spec(0.5, law, SlowlyVarying::Const { c: 2.0 });
        assert_eq!(
            check_quadratic(&c, "theorem1", false).unwrap().regime,
            Regime::BalancedConverging { limit: 2.0 }
        );
    }

    #[test]
    fn lattice_two_point_is_refused_at_critical_exponent() {
        let s = spec(0.75, two_point(2.0, 0.5, 0.25), SlowlyVarying::Const { c: 1.0 });
        let err = check_trap(&s, "theorem2", false).unwrap_err();
        assert!(err.to_string().contains("non-lattice"), "{err}");
    }

    #[test]
    fn left_transient_and_non_pareto_are_refused() {
        let s = spec(0.5, LambdaLaw::Constant { value: 0.4 }, SlowlyVarying::Const { c: 1.0 });
        assert!(matches!(classify(&s), Err(RegimeError::NotTransient(_))));
        let mut g = s;
        g.xi = XiLaw::ShiftedGeometric { p: 0.5 };
        assert_eq!(classify(&g), Err(RegimeError::NotRegularlyVarying));
    }
}
