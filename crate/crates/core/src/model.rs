//! Derived constants and the parameter restrictions that make the control
//! problem well posed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{ModelParams, PenaltyParams};

/// Which fill-uncertainty structure a run assumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UncertaintyMode {
    /// `m1 = 0`.
    Constant,
    /// `m0 = 0`.
    Linear,
    /// General `m0 + m1 L`.
    Affine,
    /// `m0 = m1 = 0`.
    None,
    /// `m1 -> infinity` with `m0 = 0`, `mu = 0`: market orders only.
    InfiniteLimit,
}

impl UncertaintyMode {
    /// The narrowest finite mode matching the zero pattern of `(m0, m1)`.
    pub fn infer(model: &ModelParams) -> Self {
        match (model.m0 == 0.0, model.m1 == 0.0) {
            (true, true) => UncertaintyMode::None,
            (false, true) => UncertaintyMode::Constant,
            (true, false) => UncertaintyMode::Linear,
            (false, false) => UncertaintyMode::Affine,
        }
    }

    /// Zero-pattern consistency between the mode and `(m0, m1)`.
    pub fn consistency_error(&self, model: &ModelParams) -> Option<String> {
        match self {
            UncertaintyMode::Constant if model.m1 != 0.0 => {
                Some(format!("constant mode requires m1 = 0 (got {})", model.m1))
            }
            UncertaintyMode::Linear if model.m0 != 0.0 => {
                Some(format!("linear mode requires m0 = 0 (got {})", model.m0))
            }
            UncertaintyMode::None if model.m0 != 0.0 || model.m1 != 0.0 => Some(format!(
                "no-uncertainty mode requires m0 = m1 = 0 (got {}, {})",
                model.m0, model.m1
            )),
            UncertaintyMode::InfiniteLimit if model.m0 != 0.0 || model.mu != 0.0 => Some(format!(
                "infinite-limit mode requires m0 = 0 and mu = 0 (got {}, {})",
                model.m0, model.mu
            )),
            _ => None,
        }
    }
}

/// How the price/fill correlation enters the `b` and `c` equations.
///
/// The Hamiltonian's limit-order coefficient carries `rho sigma m1`.
/// `Consistent` uses the same term in the coefficient ODEs, making
/// `a x^2 + b x + c` an exact solution of the HJB equation. `Printed`
/// uses `rho sigma m0` instead, which reproduces the published
/// constant-uncertainty boundary (its adverse-selection slope term) but is
/// not the value of the resulting policy when `rho m0 != 0`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationTerm {
    #[default]
    Consistent,
    Printed,
}

impl CorrelationTerm {
    /// The fill coefficient multiplying `rho sigma` in the ODE system.
    pub fn fill_coefficient(&self, model: &ModelParams) -> f64 {
        match self {
            CorrelationTerm::Consistent => model.m1,
            CorrelationTerm::Printed => model.m0,
        }
    }
}

/// `(eta1 + beta1)(eta2 + beta2)`, expanded as
/// `eta1 eta2 + beta1 beta2 + eta1 beta2 + eta2 beta1`.
pub fn impact_product(model: &ModelParams, pen: &PenaltyParams) -> f64 {
    model.eta1 * model.eta2 + pen.beta1 * pen.beta2 + model.eta1 * pen.beta2 + model.eta2 * pen.beta1
}

pub fn compute_c(model: &ModelParams, pen: &PenaltyParams) -> f64 {
    let k = impact_product(model, pen);
    let skew = model.eta1 + model.eta2 - pen.alpha;
    (4.0 * k - skew * skew) / (2.0 * (model.eta1 + pen.beta1))
}

/// An open interval `(lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpenInterval {
    pub lo: f64,
    pub hi: f64,
}

impl OpenInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo < x && x < self.hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Values of `alpha` for which `C > 0`.
pub fn admissible_alpha_interval(model: &ModelParams, pen: &PenaltyParams) -> OpenInterval {
    let center = model.eta1 + model.eta2;
    let half = 2.0 * impact_product(model, pen).sqrt();
    OpenInterval {
        lo: center - half,
        hi: center + half,
    }
}

/// `2 m1^2 a < C - gamma m1^2`, strict.
pub fn second_order_condition(a_value: f64, model: &ModelParams, pen: &PenaltyParams) -> bool {
    let m1_sq = model.m1 * model.m1;
    2.0 * m1_sq * a_value < compute_c(model, pen) - model.gamma * m1_sq
}

fn require_beta_above_half_gamma(model: &ModelParams, pen: &PenaltyParams) -> Result<()> {
    if pen.beta > 0.5 * model.gamma {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "beta = {} must exceed gamma/2 = {}",
            pen.beta,
            0.5 * model.gamma
        )))
    }
}

/// Blow-up time of the constant-uncertainty Riccati solution.
pub fn t_crit(model: &ModelParams, pen: &PenaltyParams) -> Result<f64> {
    if model.m1 != 0.0 {
        return Err(Error::Precondition(format!(
            "T_crit requires m1 = 0 (got {})",
            model.m1
        )));
    }
    require_beta_above_half_gamma(model, pen)?;
    let c = compute_c(model, pen);
    let s = pen.alpha + pen.beta1 + pen.beta2;
    Ok(model.horizon
        + (model.eta1 + pen.beta1) * c / (s * (2.0 * pen.beta - model.gamma)))
}

/// Maximum admissible horizon under linear uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Horizon {
    Bounded(f64),
    Unbounded,
}

impl Horizon {
    pub fn admits(&self, horizon: f64) -> bool {
        match self {
            Horizon::Bounded(t_max) => horizon < *t_max,
            Horizon::Unbounded => true,
        }
    }

    pub fn bound(&self) -> Option<f64> {
        match self {
            Horizon::Bounded(t) => Some(*t),
            Horizon::Unbounded => None,
        }
    }
}

pub fn t_max(model: &ModelParams, pen: &PenaltyParams) -> Result<Horizon> {
    if model.m0 != 0.0 {
        return Err(Error::Precondition(format!(
            "T_max requires m0 = 0 (got {})",
            model.m0
        )));
    }
    require_beta_above_half_gamma(model, pen)?;
    let c = compute_c(model, pen);
    let m1_sq = model.m1 * model.m1;
    let gm = model.gamma * m1_sq;
    if c >= gm {
        return Ok(Horizon::Unbounded);
    }
    let e = model.eta1 + pen.beta1;
    let num = 4.0 * m1_sq * e * (pen.beta - model.gamma) + 2.0 * e * c;
    let den = (gm - c) * (2.0 * pen.beta - model.gamma);
    Ok(Horizon::Bounded(num / den))
}

/// Horizon bound in the `m1 -> infinity` limit.
pub fn infinite_limit_t_max(model: &ModelParams, pen: &PenaltyParams) -> Result<f64> {
    require_beta_above_half_gamma(model, pen)?;
    let e = model.eta1 + pen.beta1;
    Ok(4.0 * e * (pen.beta - model.gamma) / (model.gamma * (2.0 * pen.beta - model.gamma)))
}

/// Lower bound on `beta` under linear uncertainty for a given horizon.
pub fn beta_floor(model: &ModelParams, pen: &PenaltyParams, horizon: f64) -> Result<f64> {
    if model.m0 != 0.0 {
        return Err(Error::Precondition(format!(
            "beta floor requires m0 = 0 (got {})",
            model.m0
        )));
    }
    let c = compute_c(model, pen);
    let m1_sq = model.m1 * model.m1;
    let e = model.eta1 + pen.beta1;
    let gap = model.gamma * m1_sq - c;
    let den = 2.0 * m1_sq * e - gap * horizon;
    if !(den > 0.0) {
        return Err(Error::Precondition(format!(
            "2 m1^2 (eta1+beta1) + (C - gamma m1^2) T = {den:e} must be positive; \
             horizon and penalties are jointly infeasible"
        )));
    }
    Ok(0.5 * model.gamma + (gap * e / den).max(0.0))
}

/// `beta` floor as `m1 -> infinity`.
pub fn infinite_limit_beta_floor(model: &ModelParams, pen: &PenaltyParams, horizon: f64) -> Result<f64> {
    let e = model.eta1 + pen.beta1;
    let den = 2.0 * e - model.gamma * horizon;
    if !(den > 0.0) {
        return Err(Error::Precondition(format!(
            "2 (eta1+beta1) - gamma T = {den:e} must be positive"
        )));
    }
    Ok(0.5 * model.gamma + (model.gamma * e / den).max(0.0))
}

/// `alpha` solving `2(alpha + beta1 + beta2) = C(alpha)` with `beta1`, `beta2`
/// held fixed.
///
/// `2(alpha + beta1 + beta2) - C = (alpha - alpha*)^2 / (2(eta1 + beta1))`,
/// so the root is double and equal to `eta2 - eta1 - 2 beta1`. The quadratic
/// is still solved generically; a discriminant that is negative only by
/// rounding is clamped to zero.
pub fn explicit_linear_alpha(model: &ModelParams, pen: &PenaltyParams) -> Result<Vec<f64>> {
    let e = model.eta1 + pen.beta1;
    let u = model.eta1 + model.eta2;
    let k = impact_product(model, pen);
    // alpha^2 + p alpha + q = 0
    let p = 4.0 * e - 2.0 * u;
    let q = u * u + 4.0 * e * (pen.beta1 + pen.beta2) - 4.0 * k;
    let mut disc = p * p - 4.0 * q;
    // cancellation error is relative to the largest term, not to the result
    let scale = (p * p + 4.0 * (u * u + 4.0 * e * (pen.beta1 + pen.beta2) + 4.0 * k))
        .max(f64::MIN_POSITIVE);
    if disc < 0.0 && disc > -64.0 * f64::EPSILON * scale {
        disc = 0.0;
    }
    if disc < 0.0 {
        return Err(Error::NoAdmissibleRoot(format!(
            "discriminant {disc:e} is negative"
        )));
    }
    let sq = disc.sqrt();
    let mut roots = vec![0.5 * (-p - sq)];
    if sq > 0.0 {
        roots.push(0.5 * (-p + sq));
    }
    let interval = admissible_alpha_interval(model, pen);
    let admissible: Vec<f64> = roots
        .into_iter()
        .filter(|&alpha| alpha >= 0.0 && interval.contains(alpha))
        .collect();
    if admissible.is_empty() {
        return Err(Error::NoAdmissibleRoot(format!(
            "root alpha = {} lies outside [0, inf) ∩ ({}, {}); adjust beta1/beta2",
            0.5 * -p,
            interval.lo,
            interval.hi
        )));
    }
    Ok(admissible)
}

/// Penalties with `alpha` replaced by the smallest admissible root of the
/// explicit-solution condition.
pub fn enforce_explicit_linear_condition(
    model: &ModelParams,
    pen: &PenaltyParams,
) -> Result<PenaltyParams> {
    let roots = explicit_linear_alpha(model, pen)?;
    Ok(PenaltyParams {
        alpha: roots[0],
        ..*pen
    })
}

/// Relative mismatch `|2(alpha+beta1+beta2) - C| / max(|C|, 2(alpha+beta1+beta2))`.
pub fn explicit_condition_mismatch(model: &ModelParams, pen: &PenaltyParams) -> f64 {
    let lhs = 2.0 * (pen.alpha + pen.beta1 + pen.beta2);
    let c = compute_c(model, pen);
    (lhs - c).abs() / lhs.abs().max(c.abs()).max(f64::MIN_POSITIVE)
}

/// Tolerance on [`explicit_condition_mismatch`] for the linear closed form.
pub const EXPLICIT_CONDITION_TOL: f64 = 1e-10;

/// The two relaxed sign conditions that extend the buy-sell boundary
/// analysis to `eta1 != eta2`.
pub fn in_relaxed_regime(model: &ModelParams, pen: &PenaltyParams) -> bool {
    model.eta1 - model.eta2 < 2.0 * pen.beta2 + pen.alpha
        && model.eta2 - model.eta1 < 2.0 * pen.beta1 + pen.alpha
}

/// Summary of the derived constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub c: f64,
    pub k: f64,
    pub alpha_interval: OpenInterval,
    /// `None` unless `m1 = 0` and `beta > gamma/2`.
    pub t_crit: Option<f64>,
    /// `None` unless `m0 = 0` and `beta > gamma/2`.
    pub t_max: Option<Horizon>,
    /// `None` unless `m0 = 0` and the floor is feasible for `T`.
    pub beta_floor: Option<f64>,
}

impl DerivedConstants {
    pub fn new(model: &ModelParams, pen: &PenaltyParams) -> Self {
        Self {
            c: compute_c(model, pen),
            k: impact_product(model, pen),
            alpha_interval: admissible_alpha_interval(model, pen),
            t_crit: t_crit(model, pen).ok(),
            t_max: t_max(model, pen).ok(),
            beta_floor: beta_floor(model, pen, model.horizon).ok(),
        }
    }
}

/// Constants shared by the coefficient ODEs, the Hamiltonian and the policy.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Composite {
    /// `eta1 + beta1`
    pub e: f64,
    pub c: f64,
    /// `2(alpha + beta1 + beta2)`
    pub s2: f64,
    /// `eta2 - eta1 - alpha - 2 beta1`
    pub g: f64,
    /// `2 beta - gamma`
    pub k: f64,
}

impl Composite {
    pub fn new(model: &ModelParams, pen: &PenaltyParams) -> Self {
        Self {
            e: model.eta1 + pen.beta1,
            c: compute_c(model, pen),
            s2: 2.0 * (pen.alpha + pen.beta1 + pen.beta2),
            g: model.eta2 - model.eta1 - pen.alpha - 2.0 * pen.beta1,
            k: 2.0 * pen.beta - model.gamma,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn baseline() -> (ModelParams, PenaltyParams) {
        let m = ModelParams::baseline();
        let p = PenaltyParams::baseline(&m);
        (m, p)
    }

    #[test]
    fn c_baseline() {
        let (m, p) = baseline();
        // 4 * 0.1005 * 0.0801 = 0.0322002; (0.18 - 0.15)^2 = 0.0009; / 0.201
        assert_relative_eq!(compute_c(&m, &p), 0.0313002 / 0.201, max_relative = 1e-14);
        assert_relative_eq!(compute_c(&m, &p), 0.1557224, max_relative = 1e-6);
    }

    #[test]
    fn c_special_cases() {
        let (mut m, mut p) = baseline();
        p.beta1 = 0.0;
        p.beta2 = 0.0;
        p.alpha = m.eta1 + m.eta2;
        assert_relative_eq!(compute_c(&m, &p), 2.0 * m.eta2, max_relative = 1e-14);

        m.eta2 = m.eta1;
        p.alpha = 0.0;
        assert_eq!(compute_c(&m, &p), 0.0);
    }

    #[test]
    fn c_is_asymmetric_in_impacts() {
        let (m, p) = baseline();
        let swapped = ModelParams {
            eta1: m.eta2,
            eta2: m.eta1,
            ..m
        };
        let pswap = PenaltyParams {
            beta1: p.beta2,
            beta2: p.beta1,
            ..p
        };
        // numerator is symmetric, denominator is not
        let num = |m: &ModelParams, p: &PenaltyParams| compute_c(m, p) * 2.0 * (m.eta1 + p.beta1);
        assert_relative_eq!(num(&m, &p), num(&swapped, &pswap), max_relative = 1e-14);
        assert!((compute_c(&m, &p) - compute_c(&swapped, &pswap)).abs() > 1e-3);
    }

    #[test]
    fn alpha_interval_baseline() {
        let (m, p) = baseline();
        let iv = admissible_alpha_interval(&m, &p);
        assert_relative_eq!(iv.lo, 0.0005557, epsilon = 2e-7);
        assert_relative_eq!(iv.hi, 0.3594443, epsilon = 2e-7);
        assert!(iv.contains(0.15));
        assert!(0.15 < iv.midpoint());
        assert_relative_eq!(iv.midpoint(), 0.18, max_relative = 1e-14);
    }

    #[test]
    fn alpha_interval_zero_penalty_excludes_zero() {
        let (mut m, mut p) = baseline();
        m.eta2 = m.eta1;
        p.beta1 = 0.0;
        p.beta2 = 0.0;
        let iv = admissible_alpha_interval(&m, &p);
        assert_eq!(iv.lo, 0.0);
        assert_relative_eq!(iv.hi, 4.0 * m.eta1, max_relative = 1e-14);
        assert!(!iv.contains(0.0));
    }

    #[test]
    fn alpha_interval_can_contain_zero() {
        let (m, mut p) = baseline();
        p.beta1 = 1.0;
        p.beta2 = 1.0;
        assert!(admissible_alpha_interval(&m, &p).contains(0.0));
    }

    #[test]
    fn c_vanishes_at_interval_endpoints() {
        let (m, p) = baseline();
        let iv = admissible_alpha_interval(&m, &p);
        for alpha in [iv.lo, iv.hi] {
            let c = compute_c(&m, &p.with_alpha(alpha));
            assert!(c.abs() < 1e-12 * compute_c(&m, &p), "C = {c}");
        }
    }

    #[test]
    fn second_order_condition_cases() {
        let (m, p) = baseline();
        assert!(second_order_condition(-1.0, &m, &p));
        assert!(second_order_condition(1e6, &m, &p));

        let m6 = ModelParams { m1: 6.0, ..m };
        assert!(second_order_condition(-9.99875e-4, &m6, &p));

        let c = compute_c(&m6, &p);
        let boundary = (c - m6.gamma * 36.0) / 72.0;
        assert!(!second_order_condition(boundary, &m6, &p));
    }

    #[test]
    fn t_crit_baseline() {
        let (m, p) = baseline();
        let tc = t_crit(&m, &p).unwrap();
        assert_relative_eq!(tc, 3651.97, epsilon = 0.01);
        assert!(tc > m.horizon);

        // Doubling alpha + beta1 + beta2 with C and eta1 + beta1 held fixed
        // halves the gap.
        let c = compute_c(&m, &p);
        let doubled_sum = 2.0 * (p.alpha + p.beta1 + p.beta2);
        let expected = (m.eta1 + p.beta1) * c / (doubled_sum * (2.0 * p.beta - m.gamma));
        assert_relative_eq!((tc - m.horizon) / 2.0, expected, max_relative = 1e-12);

        let big = t_crit(&m, &p.with_beta(1e9)).unwrap();
        assert!(big > m.horizon && big - m.horizon < 1e-9);
    }

    #[test]
    fn t_crit_rejects_weak_beta() {
        let (m, p) = baseline();
        assert!(t_crit(&m, &p.with_beta(1e-7)).is_err());
        assert!(t_crit(&m, &p.with_beta(m.gamma / 2.0)).is_err());
    }

    #[test]
    fn t_max_cases() {
        let (m, p) = baseline();
        let m6 = ModelParams { m1: 6.0, ..m };
        assert_eq!(t_max(&m6, &p).unwrap(), Horizon::Unbounded);

        let big = ModelParams { m1: 1000.0, ..m };
        let Horizon::Bounded(t) = t_max(&big, &p).unwrap() else {
            panic!("expected bounded horizon")
        };
        // (4e6 * 0.1005 * 0.00099975 + 0.201 C) / ((0.25 - C) * 0.00199975)
        let c = compute_c(&big, &p);
        let expected = (4e6 * 0.1005 * 0.00099975 + 0.201 * c) / ((0.25 - c) * 0.00199975);
        assert_relative_eq!(t, expected, max_relative = 1e-12);
        assert_relative_eq!(t, 2.1319e6, max_relative = 1e-4);

        let with_m0 = ModelParams { m0: 1.0, ..big };
        assert!(t_max(&with_m0, &p).is_err());
    }

    #[test]
    fn t_max_increasing_in_beta_with_limit() {
        let (m, p) = baseline();
        let big = ModelParams { m1: 1000.0, ..m };
        let mut prev = f64::NEG_INFINITY;
        for i in 0..200 {
            let beta = big.gamma / 2.0 * (1.0 + 1e-3) * 1.1f64.powi(i);
            let Horizon::Bounded(t) = t_max(&big, &p.with_beta(beta)).unwrap() else {
                panic!()
            };
            assert!(t - prev >= -1e-12 * t.abs(), "beta {beta}: {t} < {prev}");
            prev = t;
        }
        let c = compute_c(&big, &p);
        let limit = 2.0 * 1e6 * 0.1005 / (big.gamma * 1e6 - c);
        let Horizon::Bounded(far) = t_max(&big, &p.with_beta(1e12)).unwrap() else {
            panic!()
        };
        assert_relative_eq!(far, limit, max_relative = 1e-6);
    }

    #[test]
    fn beta_floor_cases() {
        let (m, p) = baseline();
        let m6 = ModelParams { m1: 6.0, ..m };
        assert_eq!(beta_floor(&m6, &p, 3600.0).unwrap(), m.gamma / 2.0);

        let big = ModelParams { m1: 1000.0, ..m };
        let c = compute_c(&big, &p);
        let floor = beta_floor(&big, &p, 3600.0).unwrap();
        let expected = 1.25e-7 + (0.25 - c) * 0.1005 / (2e6 * 0.1005 + (c - 0.25) * 3600.0);
        assert_relative_eq!(floor, expected, max_relative = 1e-12);
        assert_relative_eq!(floor - 1.25e-7, 4.724e-8, max_relative = 1e-3);

        assert!(beta_floor(&big, &p, 3e6).is_err());
    }

    #[test]
    fn beta_floor_infinite_limit() {
        let (m, p) = baseline();
        let lim = infinite_limit_beta_floor(&m, &p, 3600.0).unwrap();
        let huge = ModelParams { m1: 1e7, ..m };
        let floor = beta_floor(&huge, &p, 3600.0).unwrap();
        assert_relative_eq!(floor, lim, max_relative = 1e-6);
    }

    #[test]
    fn explicit_condition_double_root() {
        let m = ModelParams {
            eta2: 0.12,
            ..ModelParams::baseline()
        };
        let p = PenaltyParams::baseline(&m);
        let adjusted = enforce_explicit_linear_condition(&m, &p).unwrap();
        let expected = m.eta2 - m.eta1 - 2.0 * p.beta1;
        assert_relative_eq!(adjusted.alpha, expected, max_relative = 1e-9);
        let lhs = 2.0 * (adjusted.alpha + adjusted.beta1 + adjusted.beta2);
        assert!((lhs - compute_c(&m, &adjusted)).abs() < 1e-12);
        assert!(admissible_alpha_interval(&m, &adjusted).contains(adjusted.alpha));
        assert!(explicit_condition_mismatch(&m, &adjusted) < EXPLICIT_CONDITION_TOL);
    }

    #[test]
    fn explicit_condition_continuous_in_eta2() {
        let m = ModelParams {
            eta2: 0.12,
            ..ModelParams::baseline()
        };
        let p = PenaltyParams::baseline(&m);
        let mut prev = enforce_explicit_linear_condition(&m, &p).unwrap().alpha;
        for i in 1..=100 {
            let eta2 = 0.12 * (1.0 + 0.1 * i as f64 / 100.0);
            let alpha = enforce_explicit_linear_condition(&ModelParams { eta2, ..m }, &p)
                .unwrap()
                .alpha;
            assert!((alpha - prev).abs() < 2e-4, "jump at eta2 = {eta2}");
            prev = alpha;
        }
    }

    #[test]
    fn explicit_condition_infeasible_cases() {
        // Equal impacts with no speed limiter: the root is alpha = 0 where C = 0.
        let m = ModelParams {
            eta2: 0.1,
            ..ModelParams::baseline()
        };
        let p = PenaltyParams {
            beta1: 0.0,
            beta2: 0.0,
            ..PenaltyParams::baseline(&m)
        };
        assert!(matches!(
            enforce_explicit_linear_condition(&m, &p),
            Err(Error::NoAdmissibleRoot(_))
        ));
        // Baseline impacts put the root at a negative alpha.
        let m = ModelParams::baseline();
        let p = PenaltyParams::baseline(&m);
        assert!(enforce_explicit_linear_condition(&m, &p).is_err());
    }

    #[test]
    fn composite_identity_g_squared() {
        // (eta2 - eta1 - alpha - 2 beta1)^2 = 2 (eta1 + beta1)(2(alpha+beta1+beta2) - C)
        let (m, p) = baseline();
        for alpha in [0.0, 0.05, 0.15, 0.3] {
            let c = Composite::new(&m, &p.with_alpha(alpha));
            assert_relative_eq!(c.g * c.g, 2.0 * c.e * (c.s2 - c.c), max_relative = 1e-10);
        }
    }

    #[test]
    fn mode_consistency() {
        let m = ModelParams::baseline().with_affine_uncertainty(0.05, 0.05);
        assert!(UncertaintyMode::Affine.consistency_error(&m).is_none());
        assert!(UncertaintyMode::Constant.consistency_error(&m).is_some());
        assert!(UncertaintyMode::Linear.consistency_error(&m).is_some());
        assert!(UncertaintyMode::None.consistency_error(&m).is_some());
        assert!(UncertaintyMode::InfiniteLimit.consistency_error(&m).is_some());
    }
}
