//! Optimal feedback rates, the buy-sell boundary and the market-order-only
//! limit policy.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{in_relaxed_regime, t_crit, Composite, CorrelationTerm};
use crate::params::{ModelParams, PenaltyParams};
use crate::value::{constant_b0, maximize_j, CoefficientSource, ValueCoefficients};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvaluation {
    pub t: f64,
    pub x: f64,
    pub v_star: f64,
    pub l_star: f64,
    /// Determinant of the Hessian of the Hamiltonian in `(v, L)`.
    pub delta: f64,
    /// `m1^2 (V_xx + gamma)`.
    pub psi: f64,
    /// Zero of `V_x + eta0` in `x` when the rates share its sign.
    pub boundary: Option<f64>,
    /// `v^2 > R1` or `L^2 > R2`. Rates are never clamped.
    pub cap_exceeded: bool,
}

/// Determinant below which the Hessian is treated as singular, relative to
/// `2 (eta1 + beta1) |C|`.
const DELTA_TOL: f64 = 1e-12;

/// True when the boundary characterization of the rates applies.
pub fn boundary_defined(model: &ModelParams, pen: &PenaltyParams) -> bool {
    model.m1 == 0.0 && (model.eta1 == model.eta2 || in_relaxed_regime(model, pen))
}

/// Rates from `a(t)`, `b(t)` at position `x`. Returns `(v, L, delta, psi)`.
#[inline]
pub(crate) fn rates_from_coefficients(
    model: &ModelParams,
    pen: &PenaltyParams,
    a: f64,
    b: f64,
    x: f64,
) -> (f64, f64, f64, f64) {
    let vxx = 2.0 * a;
    let kappa = model.m0 * model.m1 * (vxx + model.gamma) + model.rho * model.sigma * model.m1;
    let max = maximize_j(model, pen, 2.0 * a * x + b, vxx, kappa);
    let psi = model.m1 * model.m1 * (vxx + model.gamma);
    (max.v, max.l, max.delta, psi)
}

/// Market-order-only rate `-(V_x + eta0) / (2 (eta1 + beta1))`.
#[inline]
pub(crate) fn limit_rate_from_coefficients(model: &ModelParams, pen: &PenaltyParams, a: f64, b: f64, x: f64) -> f64 {
    -(2.0 * a * x + b + model.eta0) / (2.0 * (model.eta1 + pen.beta1))
}

pub fn optimal_controls(
    coeffs: &ValueCoefficients,
    model: &ModelParams,
    pen: &PenaltyParams,
    t: f64,
    x: f64,
) -> Result<PolicyEvaluation> {
    let (a, b, _) = coeffs.at(t);
    if coeffs.source == CoefficientSource::InfiniteLimit {
        let v = limit_rate_from_coefficients(model, pen, a, b, x);
        return Ok(PolicyEvaluation {
            t,
            x,
            v_star: v,
            l_star: 0.0,
            delta: f64::INFINITY,
            psi: f64::NEG_INFINITY,
            boundary: None,
            cap_exceeded: v * v > pen.r1_sq,
        });
    }
    let comp = Composite::new(model, pen);
    let (v, l, delta, psi) = rates_from_coefficients(model, pen, a, b, x);
    if !(delta > DELTA_TOL * 2.0 * comp.e * comp.c.abs()) {
        return Err(Error::DegenerateHessian { t, delta });
    }
    let boundary = boundary_defined(model, pen).then(|| -(b + model.eta0) / (2.0 * a));
    Ok(PolicyEvaluation {
        t,
        x,
        v_star: v,
        l_star: l,
        delta,
        psi,
        boundary,
        cap_exceeded: v * v > pen.r1_sq || l * l > pen.r2_sq,
    })
}

/// Evaluates the policy on every `(t, x)` pair of the Cartesian product.
pub fn evaluate_grid(
    coeffs: &ValueCoefficients,
    model: &ModelParams,
    pen: &PenaltyParams,
    times: &[f64],
    positions: &[f64],
    exec: Execution,
) -> Result<Vec<PolicyEvaluation>> {
    let nx = positions.len();
    exec.map(times.len() * nx, |k| {
        optimal_controls(coeffs, model, pen, times[k / nx], positions[k % nx])
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Monotonicity {
    NonIncreasing,
    NonDecreasing,
    Mixed,
    /// Zero slope everywhere.
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryProfile {
    pub grid: Vec<f64>,
    pub p: Vec<f64>,
    pub classification: Monotonicity,
    /// `eta0 / (2 beta - gamma)`.
    pub terminal_target: f64,
    /// Set when `eta1 != eta2` and only the relaxed sign conditions hold.
    pub relaxed_regime: bool,
    pub convention: CorrelationTerm,
}

impl BoundaryProfile {
    /// CSV with header `t,P`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            t: f64,
            #[serde(rename = "P")]
            p: f64,
        }
        let mut w = csv::Writer::from_writer(out);
        for (&t, &p) in self.grid.iter().zip(&self.p) {
            w.serialize(Row { t, p }).map_err(|e| Error::Csv {
                path: "<boundary>".into(),
                source: e,
            })?;
        }
        w.flush().map_err(|e| Error::io("<boundary>", e))
    }
}

struct BoundaryShape {
    tc: f64,
    comp: Composite,
    kappa: f64,
    relaxed: bool,
}

fn boundary_shape(model: &ModelParams, pen: &PenaltyParams, convention: CorrelationTerm) -> Result<BoundaryShape> {
    if model.m1 != 0.0 {
        return Err(Error::Precondition(format!(
            "the buy-sell boundary requires m1 = 0 (got {})",
            model.m1
        )));
    }
    let relaxed = model.eta1 != model.eta2;
    if relaxed && !in_relaxed_regime(model, pen) {
        return Err(Error::Precondition(
            "eta1 != eta2 outside the regime eta1 - eta2 < 2 beta2 + alpha, eta2 - eta1 < 2 beta1 + alpha"
                .into(),
        ));
    }
    let comp = Composite::new(model, pen);
    if !(comp.c > 0.0) {
        return Err(Error::Precondition(format!("C = {} must be positive", comp.c)));
    }
    Ok(BoundaryShape {
        tc: t_crit(model, pen)?,
        comp,
        kappa: model.rho * model.sigma * convention.fill_coefficient(model),
        relaxed,
    })
}

impl BoundaryShape {
    fn slope(&self, model: &ModelParams, t: f64) -> f64 {
        let Composite { e, c, s2, g, .. } = self.comp;
        -(self.tc - t) * 0.5 * s2 * model.mu / (e * c) + g * self.kappa / (2.0 * e * c)
    }

    fn classify(&self, model: &ModelParams, grid: &[f64]) -> Monotonicity {
        let slopes: Vec<f64> = grid.iter().map(|&t| self.slope(model, t)).collect();
        let non_pos = slopes.iter().all(|&s| s <= 0.0);
        let non_neg = slopes.iter().all(|&s| s >= 0.0);
        match (non_pos, non_neg) {
            (true, true) => Monotonicity::Constant,
            (true, false) => Monotonicity::NonIncreasing,
            (false, true) => Monotonicity::NonDecreasing,
            (false, false) => Monotonicity::Mixed,
        }
    }
}

/// `P(t) = eta0 / (2 beta - gamma) + b0(t) / 2` on `grid`.
pub fn buy_sell_boundary(
    model: &ModelParams,
    pen: &PenaltyParams,
    convention: CorrelationTerm,
    grid: &[f64],
) -> Result<BoundaryProfile> {
    let shape = boundary_shape(model, pen, convention)?;
    let target = model.eta0 / shape.comp.k;
    let p = grid
        .iter()
        .map(|&t| {
            if t == model.horizon {
                target
            } else {
                target + 0.5 * constant_b0(model, pen, shape.kappa, shape.tc, t)
            }
        })
        .collect();
    Ok(BoundaryProfile {
        grid: grid.to_vec(),
        p,
        classification: shape.classify(model, grid),
        terminal_target: target,
        relaxed_regime: shape.relaxed,
        convention,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub classification: Monotonicity,
    /// `|rho|` at or below which the boundary is non-increasing on `[0, T]`.
    pub rho_non_increasing: Option<f64>,
    /// `|rho|` at or above which the boundary is non-decreasing on `[0, T]`.
    pub rho_non_decreasing: Option<f64>,
}

/// Classifies the boundary slope on `[0, T]` (sampled at `samples` points,
/// plus both ends) and, for `eta1 = eta2`, `mu != 0`, `m0 != 0`, returns the
/// `|rho|` thresholds. Thresholds are `None` when the correlation does not
/// enter the boundary under `convention`.
pub fn classify_boundary_monotonicity(
    model: &ModelParams,
    pen: &PenaltyParams,
    convention: CorrelationTerm,
    samples: usize,
) -> Result<MonotonicityReport> {
    let shape = boundary_shape(model, pen, convention)?;
    let n = samples.max(2);
    let grid: Vec<f64> = (0..n)
        .map(|i| model.horizon * i as f64 / (n - 1) as f64)
        .collect();
    let classification = shape.classify(model, &grid);
    let uses_rho = convention.fill_coefficient(model) != 0.0;
    let thresholds = (model.eta1 == model.eta2 && model.mu != 0.0 && uses_rho).then(|| {
        let Composite { e, c, s2, k, .. } = shape.comp;
        let lever = (pen.alpha + 2.0 * pen.beta1) * model.sigma * model.m0.abs();
        let s = 0.5 * s2;
        (
            (2.0 * e * c * model.mu / (lever * k)).abs(),
            (2.0 * model.mu * s * shape.tc / lever).abs(),
        )
    });
    Ok(MonotonicityReport {
        classification,
        rho_non_increasing: thresholds.map(|t| t.0),
        rho_non_decreasing: thresholds.map(|t| t.1),
    })
}

/// Market-order-only rates of the `m1 -> infinity` limit:
/// `L = 0`, `v = (x - eta0/(2 beta - gamma)) (2 beta - gamma) / (2 (eta1 + beta1) + (T - t)(2 beta - gamma))`.
pub fn infinite_uncertainty_policy(
    model: &ModelParams,
    pen: &PenaltyParams,
    t: f64,
    x: f64,
) -> Result<(f64, f64)> {
    if model.m0 != 0.0 || model.mu != 0.0 {
        return Err(Error::Precondition(format!(
            "the market-order-only limit requires m0 = 0 and mu = 0 (got {}, {})",
            model.m0, model.mu
        )));
    }
    let comp = Composite::new(model, pen);
    let k = comp.k;
    let v = (x - model.eta0 / k) * k / (2.0 * comp.e + (model.horizon - t) * k);
    Ok((v, 0.0))
}

/// CSV with header `t,x,vStar,lStar,delta`.
pub fn write_policy_csv<W: Write>(evals: &[PolicyEvaluation], out: W) -> Result<()> {
    #[derive(Serialize)]
    #[serde(rename_all = "camelCase")]
    struct Row {
        t: f64,
        x: f64,
        v_star: f64,
        l_star: f64,
        delta: f64,
    }
    let mut w = csv::Writer::from_writer(out);
    for e in evals {
        w.serialize(Row {
            t: e.t,
            x: e.x,
            v_star: e.v_star,
            l_star: e.l_star,
            delta: e.delta,
        })
        .map_err(|e| Error::Csv {
            path: "<policy>".into(),
            source: e,
        })?;
    }
    w.flush().map_err(|e| Error::io("<policy>", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::{solve_affine_numerical, solve_constant_closed_form};
    use approx::assert_relative_eq;

    fn equal_impacts() -> (ModelParams, PenaltyParams) {
        let m = ModelParams {
            eta2: 0.1,
            ..ModelParams::baseline().with_constant_uncertainty(0.1)
        };
        (m, PenaltyParams::baseline(&m))
    }

    #[test]
    fn rates_vanish_on_boundary() {
        let (m, p) = equal_impacts();
        let cf = solve_constant_closed_form(&m, &p, CorrelationTerm::Consistent, 3601).unwrap();
        let bp = buy_sell_boundary(&m, &p, CorrelationTerm::Consistent, &cf.grid).unwrap();
        for i in [0, 1000, 3599] {
            let e = optimal_controls(&cf, &m, &p, cf.grid[i], bp.p[i]).unwrap();
            assert!(e.v_star.abs() < 1e-10 && e.l_star.abs() < 1e-10, "{e:?}");
            assert_relative_eq!(e.boundary.unwrap(), bp.p[i], max_relative = 1e-9);
        }
    }

    #[test]
    fn rate_ratio_equal_impacts() {
        let (m, p) = equal_impacts();
        let cf = solve_constant_closed_form(&m, &p, CorrelationTerm::Consistent, 361).unwrap();
        let expected = (2.0 * p.beta2 + p.alpha) / (2.0 * p.beta1 + p.alpha);
        for &(t, x) in &[(0.0, 1e4), (1234.5, -300.0), (3000.0, 5e3)] {
            let e = optimal_controls(&cf, &m, &p, t, x).unwrap();
            assert_relative_eq!(e.v_star / e.l_star, expected, max_relative = 1e-10);
        }
    }

    #[test]
    fn baseline_limit_orders_dominate() {
        let m = ModelParams::baseline().with_constant_uncertainty(0.1);
        let p = PenaltyParams::baseline(&m);
        let cf = solve_constant_closed_form(&m, &p, CorrelationTerm::Consistent, 3601).unwrap();
        let e = optimal_controls(&cf, &m, &p, 0.0, m.x0).unwrap();
        assert!(e.v_star > 0.0 && e.l_star > e.v_star, "{e:?}");
    }

    #[test]
    fn delta_identity_and_affinity() {
        let m = ModelParams::baseline().with_affine_uncertainty(0.05, 0.05);
        let p = PenaltyParams::baseline(&m);
        let nu = solve_affine_numerical(&m, &p, CorrelationTerm::Consistent, 721).unwrap();
        let comp = Composite::new(&m, &p);
        for &t in &[0.0, 900.0, 3595.0] {
            let es: Vec<_> = [-1e4, 2e3, 1.5e4]
                .iter()
                .map(|&x| optimal_controls(&nu, &m, &p, t, x).unwrap())
                .collect();
            for e in &es {
                assert_relative_eq!(e.delta, 2.0 * comp.e * (comp.c - e.psi), max_relative = 1e-12);
                assert!(e.delta > 0.0);
            }
            let slope = |f: fn(&PolicyEvaluation) -> f64| {
                let s1 = (f(&es[1]) - f(&es[0])) / (es[1].x - es[0].x);
                let s2 = (f(&es[2]) - f(&es[1])) / (es[2].x - es[1].x);
                (s1, s2)
            };
            let (a, b) = slope(|e| e.v_star);
            assert_relative_eq!(a, b, max_relative = 1e-9);
            let (a, b) = slope(|e| e.l_star);
            assert_relative_eq!(a, b, max_relative = 1e-9);
        }
    }

    #[test]
    fn terminal_targets() {
        let (m, p) = equal_impacts();
        let grid = [0.0, 1800.0, m.horizon];
        let bp = buy_sell_boundary(&m, &p, CorrelationTerm::Printed, &grid).unwrap();
        assert_eq!(bp.terminal_target, m.eta0 / (2.0 * p.beta - m.gamma));
        assert_eq!(*bp.p.last().unwrap(), bp.terminal_target);
        assert_relative_eq!(bp.terminal_target, 25.0031, max_relative = 1e-5);
        let high = buy_sell_boundary(&m, &p.with_beta(0.1), CorrelationTerm::Printed, &grid).unwrap();
        assert_relative_eq!(high.terminal_target, 0.05 / (0.2 - 2.5e-7), max_relative = 1e-14);
    }

    #[test]
    fn example_reduction_without_drift_or_fixed_cost() {
        let m = ModelParams {
            mu: 0.0,
            eta0: 0.0,
            ..equal_impacts().0
        };
        let p = PenaltyParams::baseline(&m);
        let grid: Vec<f64> = (0..=100).map(|i| 36.0 * i as f64).collect();
        let bp = buy_sell_boundary(&m, &p, CorrelationTerm::Printed, &grid).unwrap();
        let comp = Composite::new(&m, &p);
        for (&t, &pv) in bp.grid.iter().zip(&bp.p) {
            let expected = (p.alpha + 2.0 * p.beta1) * m.rho * m.sigma * m.m0 * (m.horizon - t)
                / (2.0 * comp.e * comp.c);
            assert_relative_eq!(pv, expected, max_relative = 1e-12, epsilon = 1e-15);
            if t < m.horizon {
                assert!(pv < 0.0);
            }
        }
        assert_eq!(*bp.p.last().unwrap(), 0.0);
        assert_eq!(bp.classification, Monotonicity::NonDecreasing);
    }

    #[test]
    fn figure_three_classifications() {
        let (m, p) = equal_impacts();
        let strong = classify_boundary_monotonicity(&m, &p, CorrelationTerm::Printed, 1001).unwrap();
        let weak = classify_boundary_monotonicity(
            &ModelParams { rho: -0.0005, ..m },
            &p,
            CorrelationTerm::Printed,
            1001,
        )
        .unwrap();
        assert_eq!(strong.classification, Monotonicity::NonDecreasing);
        assert_eq!(weak.classification, Monotonicity::NonIncreasing);
        // Without drift and correlation terms the slope is negative throughout.
        let zero_rho = classify_boundary_monotonicity(
            &ModelParams { rho: 0.0, ..m },
            &p,
            CorrelationTerm::Printed,
            101,
        )
        .unwrap();
        assert_eq!(zero_rho.classification, Monotonicity::NonIncreasing);
    }

    #[test]
    fn threshold_flips_classification() {
        let (m, p) = equal_impacts();
        let r = classify_boundary_monotonicity(&m, &p, CorrelationTerm::Printed, 11).unwrap();
        let thr = r.rho_non_increasing.unwrap();
        let at = |rho: f64| {
            classify_boundary_monotonicity(&ModelParams { rho, ..m }, &p, CorrelationTerm::Printed, 1001)
                .unwrap()
                .classification
        };
        assert_eq!(at(-thr * (1.0 - 1e-6)), Monotonicity::NonIncreasing);
        assert_ne!(at(-thr * (1.0 + 1e-6)), Monotonicity::NonIncreasing);
        let up = r.rho_non_decreasing.unwrap();
        if up < 1.0 {
            assert_eq!(at(-up * (1.0 + 1e-6)), Monotonicity::NonDecreasing);
            assert_ne!(at(-up * (1.0 - 1e-6)), Monotonicity::NonDecreasing);
        }
    }

    #[test]
    fn consistent_boundary_ignores_correlation() {
        let (m, p) = equal_impacts();
        let r = classify_boundary_monotonicity(&m, &p, CorrelationTerm::Consistent, 11).unwrap();
        assert_eq!(r.classification, Monotonicity::NonIncreasing);
        assert!(r.rho_non_increasing.is_none());
    }

    #[test]
    fn boundary_rejects_linear_uncertainty() {
        let m = ModelParams::baseline().with_linear_uncertainty(0.1);
        let p = PenaltyParams::baseline(&m);
        assert!(buy_sell_boundary(&m, &p, CorrelationTerm::Printed, &[0.0]).is_err());
    }

    #[test]
    fn infinite_policy_values() {
        let m = ModelParams {
            mu: 0.0,
            ..ModelParams::baseline()
        };
        let p = PenaltyParams::baseline(&m);
        let (v, l) = infinite_uncertainty_policy(&m, &p, 0.0, 1e4).unwrap();
        let k = 2.0 * p.beta - m.gamma;
        let e = m.eta1 + p.beta1;
        let oracle = (1e4 - 0.05 / k) * k / (2.0 * e + 3600.0 * k);
        assert_relative_eq!(v, oracle, max_relative = 1e-14);
        assert_relative_eq!(v, 2.69557, max_relative = 1e-5);
        assert_eq!(l, 0.0);
        let (v0, _) = infinite_uncertainty_policy(&m, &p, 100.0, m.eta0 / k).unwrap();
        assert_eq!(v0, 0.0);
        assert!(infinite_uncertainty_policy(&ModelParams::baseline(), &p, 0.0, 1.0).is_err());
    }

    #[test]
    fn csv_headers() {
        let (m, p) = equal_impacts();
        let bp = buy_sell_boundary(&m, &p, CorrelationTerm::Printed, &[0.0, m.horizon]).unwrap();
        let mut buf = Vec::new();
        bp.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,P\n"));
        let cf = solve_constant_closed_form(&m, &p, CorrelationTerm::Consistent, 11).unwrap();
        let ev = evaluate_grid(&cf, &m, &p, &[0.0, 360.0], &[1.0, 2.0, 3.0], Execution::default()).unwrap();
        assert_eq!(ev.len(), 6);
        assert_eq!((ev[4].t, ev[4].x), (360.0, 2.0));
        let mut buf = Vec::new();
        write_policy_csv(&ev, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,x,vStar,lStar,delta\n"));
    }
}
