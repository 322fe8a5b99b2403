//! Value function `V(t, x) = a(t) x^2 + b(t) x + c(t)`: coefficient ODEs,
//! closed-form special cases and the HJB residual.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    explicit_condition_mismatch, beta_floor, t_crit, Composite, CorrelationTerm, UncertaintyMode,
    EXPLICIT_CONDITION_TOL,
};
use crate::params::{ModelParams, PenaltyParams};
use crate::schedule::{SampledSchedule, ScheduleSpec, WeightSpec};
use crate::spline::{CubicSpline, EndCondition};
use crate::validity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoefficientSource {
    ClosedFormConstant,
    ClosedFormLinear,
    NumericalAffine,
    NumericalScheduled,
    InfiniteLimit,
}

/// Relative size of `C - psi` below which a solve aborts.
const DENOMINATOR_GUARD: f64 = 1e-12;

/// Right-hand side of the coefficient ODE system.
#[derive(Debug, Clone)]
pub(crate) struct CoefficientOde {
    model: ModelParams,
    pen: PenaltyParams,
    comp: Composite,
    /// `rho sigma` times the convention's fill coefficient.
    corr_fill: f64,
    /// Limit of `kappa^2 m1^{-2}` as `m1 -> infinity` (`None` for finite `m1`).
    limit_corr_sq: Option<f64>,
}

impl CoefficientOde {
    pub fn new(model: &ModelParams, pen: &PenaltyParams, convention: CorrelationTerm) -> Self {
        Self {
            model: *model,
            pen: *pen,
            comp: Composite::new(model, pen),
            corr_fill: model.rho * model.sigma * convention.fill_coefficient(model),
            limit_corr_sq: None,
        }
    }

    pub fn infinite_limit(model: &ModelParams, pen: &PenaltyParams, convention: CorrelationTerm) -> Self {
        let rs = model.rho * model.sigma;
        let limit = match convention {
            CorrelationTerm::Consistent => rs * rs,
            CorrelationTerm::Printed => 0.0,
        };
        Self {
            limit_corr_sq: Some(limit),
            ..Self::new(model, pen, convention)
        }
    }

    /// `kappa = m0 m1 (2a + gamma) + rho sigma m_c`.
    #[inline]
    pub fn kappa(&self, a: f64) -> f64 {
        self.model.m0 * self.model.m1 * (2.0 * a + self.model.gamma) + self.corr_fill
    }

    fn running_constant(&self) -> f64 {
        self.pen.beta1 * self.pen.r1_sq + self.pen.beta2 * self.pen.r2_sq
    }

    /// `(a', b', c')` at `(a, b)` with tracking weight `w` and target `q`.
    pub fn eval(&self, t: f64, a: f64, b: f64, w: f64, q: f64) -> Result<[f64; 3]> {
        let m = &self.model;
        let Composite { e, c, s2, g, .. } = self.comp;
        let u = b + m.eta0;
        let mut out = if let Some(limit_sq) = self.limit_corr_sq {
            let curv = 2.0 * a + m.gamma;
            if !(curv < 0.0) {
                return Err(Error::SecondOrderBreach { t, margin: -curv });
            }
            [
                -a * a / e,
                -m.mu - a * u / e,
                -(self.running_constant() + u * u / (4.0 * e) - limit_sq / (2.0 * curv)),
            ]
        } else {
            let curv = 2.0 * a + m.gamma;
            let psi = m.m1 * m.m1 * curv;
            let d = c - psi;
            if !(d > DENOMINATOR_GUARD * c.abs()) {
                return Err(Error::SecondOrderBreach { t, margin: d });
            }
            let n = s2 - psi;
            let kappa = self.kappa(a);
            let ed = e * d;
            [
                -n * a * a / ed,
                -m.mu - (n * a * u + g * kappa * a) / ed,
                -(0.5 * m.m0 * m.m0 * curv
                    + m.rho * m.sigma * m.m0
                    + self.running_constant()
                    + n * u * u / (4.0 * ed)
                    + g * kappa * u / (2.0 * ed)
                    + kappa * kappa / (2.0 * d)),
            ]
        };
        if w != 0.0 {
            out[0] += w;
            out[1] -= 2.0 * w * q;
            out[2] += w * q * q;
        }
        Ok(out)
    }
}

/// Solved coefficients on a uniform grid `t_i = i T / N`.
#[derive(Debug, Clone)]
pub struct ValueCoefficients {
    pub grid: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub source: CoefficientSource,
    pub convention: CorrelationTerm,
    pub model: ModelParams,
    pub pen: PenaltyParams,
    schedule: Option<SampledSchedule>,
    splines: [CubicSpline; 3],
}

/// Row-wise view for serialization.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub t: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl ValueCoefficients {
    #[allow(clippy::too_many_arguments)]
    fn build(
        grid: Vec<f64>,
        a: Vec<f64>,
        b: Vec<f64>,
        c: Vec<f64>,
        source: CoefficientSource,
        convention: CorrelationTerm,
        model: &ModelParams,
        pen: &PenaltyParams,
        schedule: Option<SampledSchedule>,
        ode: &CoefficientOde,
    ) -> Result<Self> {
        let n = grid.len() - 1;
        let sched_at = |i: usize| schedule.as_ref().map_or((0.0, 0.0), |s| s.half_step(2 * i));
        let (w0, q0) = sched_at(0);
        let (wn, qn) = sched_at(n);
        let d0 = ode.eval(grid[0], a[0], b[0], w0, q0)?;
        let dn = ode.eval(grid[n], a[n], b[n], wn, qn)?;
        let spline = |y: &[f64], k: usize| {
            CubicSpline::new(&grid, y, EndCondition::Clamped(d0[k], dn[k]))
        };
        let splines = [spline(&a, 0), spline(&b, 1), spline(&c, 2)];
        Ok(Self {
            grid,
            a,
            b,
            c,
            source,
            convention,
            model: *model,
            pen: *pen,
            schedule,
            splines,
        })
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn n_steps(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    pub fn schedule(&self) -> Option<&SampledSchedule> {
        self.schedule.as_ref()
    }

    /// `(a, b, c)` at `t`: exact at grid nodes, spline-interpolated between.
    pub fn at(&self, t: f64) -> (f64, f64, f64) {
        if let Some(i) = self.node_index(t) {
            return (self.a[i], self.b[i], self.c[i]);
        }
        (
            self.splines[0].eval(t),
            self.splines[1].eval(t),
            self.splines[2].eval(t),
        )
    }

    /// Spline time derivatives `(a', b', c')` at `t`.
    pub fn time_derivatives(&self, t: f64) -> (f64, f64, f64) {
        (
            self.splines[0].derivative(t),
            self.splines[1].derivative(t),
            self.splines[2].derivative(t),
        )
    }

    /// Index `i` with `grid[i] == t`, if any.
    pub fn node_index(&self, t: f64) -> Option<usize> {
        let n = self.n_steps();
        let pos = t / self.horizon() * n as f64;
        let i = pos.round();
        if i < 0.0 || i > n as f64 {
            return None;
        }
        let i = i as usize;
        (self.grid[i] == t).then_some(i)
    }

    pub fn value(&self, t: f64, x: f64) -> f64 {
        let (a, b, c) = self.at(t);
        a * x * x + b * x + c
    }

    /// `V(0, x0)`.
    pub fn initial_value(&self) -> f64 {
        let x0 = self.model.x0;
        self.a[0] * x0 * x0 + self.b[0] * x0 + self.c[0]
    }

    pub fn rows(&self) -> impl Iterator<Item = CoefficientRow> + '_ {
        (0..self.len()).map(|i| CoefficientRow {
            t: self.grid[i],
            a: self.a[i],
            b: self.b[i],
            c: self.c[i],
        })
    }

    /// CSV with header `t,a,b,c`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let to_err = |e: csv::Error| Error::Csv {
            path: "<coefficients>".into(),
            source: e,
        };
        for row in self.rows() {
            w.serialize(row).map_err(to_err)?;
        }
        w.flush().map_err(|e| Error::io("<coefficients>", e))?;
        Ok(())
    }
}

fn uniform_grid(horizon: f64, n_steps: usize) -> Vec<f64> {
    let h = horizon / n_steps as f64;
    (0..=n_steps)
        .map(|i| if i == n_steps { horizon } else { h * i as f64 })
        .collect()
}

fn check_grid(grid_size: usize, horizon: f64) -> Result<usize> {
    if grid_size < 2 {
        return Err(Error::param("grid_size", format!("must be >= 2 (got {grid_size})")));
    }
    let n = grid_size - 1;
    let h = horizon / n as f64;
    if !(h > horizon * 16.0 * f64::EPSILON) {
        return Err(Error::StepUnderflow { t: horizon, h });
    }
    Ok(n)
}

fn terminal_a(model: &ModelParams, pen: &PenaltyParams) -> f64 {
    0.5 * model.gamma - pen.beta
}

fn ensure_finite(t: f64, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { t })
    }
}

/// `(grid, a, b, c)` columns.
type Columns = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);

/// Fixed-step RK4 backward from `T`, advancing `(a, b, c)` together.
fn integrate_backward(
    ode: &CoefficientOde,
    model: &ModelParams,
    pen: &PenaltyParams,
    n: usize,
    schedule: Option<&SampledSchedule>,
) -> Result<Columns> {
    let grid = uniform_grid(model.horizon, n);
    let h = model.horizon / n as f64;
    let mut a = vec![0.0; n + 1];
    let mut b = vec![0.0; n + 1];
    let mut c = vec![0.0; n + 1];
    a[n] = terminal_a(model, pen);
    let sched = |j: usize| schedule.map_or((0.0, 0.0), |s| s.half_step(j));
    let exact = |t: f64| schedule.map_or((0.0, 0.0), |s| s.at(t));
    for i in (0..n).rev() {
        let t1 = grid[i + 1];
        let t0 = grid[i];
        let mut y = [a[i + 1], b[i + 1], c[i + 1]];
        let (w1, q1) = sched(2 * i + 2);
        let k1 = ode.eval(t1, y[0], y[1], w1, q1)?;
        let substeps = stiff_substeps(ode, t1, y, k1, h, (w1, q1))?;
        if substeps == 1 {
            let (wm, qm) = sched(2 * i + 1);
            let (w0, q0) = sched(2 * i);
            y = rk4_step(ode, t1, h, y, k1, [(wm, qm), (w0, q0)])?;
        } else {
            // backward from T the stiffness only decays, so the count fixed
            // at the right end is enough for the whole interval
            let hs = (t1 - t0) / substeps as f64;
            for j in 0..substeps {
                let ts = t1 - j as f64 * hs;
                let (ws, qs) = exact(ts);
                let k1 = ode.eval(ts, y[0], y[1], ws, qs)?;
                y = rk4_step(ode, ts, hs, y, k1, [exact(ts - 0.5 * hs), exact(ts - hs)])?;
            }
        }
        [a[i], b[i], c[i]] = y;
        ensure_finite(t0, &y)?;
    }
    Ok((grid, a, b, c))
}

/// Largest `|h * df/dy|` one RK4 step may take before it is split.
const STIFF_STEP_LIMIT: f64 = 0.2;

/// Number of RK4 substeps that keeps `h` times the local stiffness of the
/// `(a, b)` block below [`STIFF_STEP_LIMIT`].
fn stiff_substeps(
    ode: &CoefficientOde,
    t: f64,
    y: [f64; 3],
    k: [f64; 3],
    h: f64,
    (w, q): (f64, f64),
) -> Result<usize> {
    // perturb toward more negative `a`, which stays admissible
    let da = 1e-7 * y[0].abs().max(f64::MIN_POSITIVE);
    let db = 1e-7 * y[1].abs().max(1.0);
    let ka = ode.eval(t, y[0] - da, y[1], w, q)?;
    let kb = ode.eval(t, y[0], y[1] + db, w, q)?;
    let rate = ((ka[0] - k[0]) / da).abs().max(((kb[1] - k[1]) / db).abs());
    let ratio = h * rate / STIFF_STEP_LIMIT;
    Ok(if ratio.is_finite() && ratio > 1.0 { (ratio.ceil() as usize).min(1 << 20) } else { 1 })
}

/// One classical RK4 step backward from `t1` to `t1 - h`, given `k1` and
/// the `(w, Q)` samples at the midpoint and the left end.
fn rk4_step(
    ode: &CoefficientOde,
    t1: f64,
    h: f64,
    y: [f64; 3],
    k1: [f64; 3],
    [(wm, qm), (w0, q0)]: [(f64, f64); 2],
) -> Result<[f64; 3]> {
    let tm = t1 - 0.5 * h;
    let k2 = ode.eval(tm, y[0] - 0.5 * h * k1[0], y[1] - 0.5 * h * k1[1], wm, qm)?;
    let k3 = ode.eval(tm, y[0] - 0.5 * h * k2[0], y[1] - 0.5 * h * k2[1], wm, qm)?;
    let k4 = ode.eval(t1 - h, y[0] - h * k3[0], y[1] - h * k3[1], w0, q0)?;
    Ok(std::array::from_fn(|k| y[k] - h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k])))
}

/// Relative tolerance of the adaptive Simpson rule for `c`.
const QUADRATURE_TOL: f64 = 1e-12;

/// Adaptive Simpson on `[t0, t1]` given `f` at both ends and the midpoint.
#[allow(clippy::too_many_arguments)]
fn adaptive_simpson(
    f: &impl Fn(f64) -> Result<f64>,
    t0: f64,
    t1: f64,
    f0: f64,
    fm: f64,
    f1: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let tm = 0.5 * (t0 + t1);
    let (fl, fr) = (f(0.5 * (t0 + tm))?, f(0.5 * (tm + t1))?);
    let left = (tm - t0) / 6.0 * (f0 + 4.0 * fl + fm);
    let right = (t1 - tm) / 6.0 * (fm + 4.0 * fr + f1);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return Ok(left + right + diff / 15.0);
    }
    Ok(adaptive_simpson(f, t0, tm, f0, fl, fm, left, 0.5 * tol, depth - 1)?
        + adaptive_simpson(f, tm, t1, fm, fr, f1, right, 0.5 * tol, depth - 1)?)
}

/// Simpson for `c` given exact `(a, b)` at any time, refined adaptively
/// inside each grid interval where the integrand has a boundary layer.
fn quadrature_c(
    ode: &CoefficientOde,
    grid: &[f64],
    ab: impl Fn(f64) -> (f64, f64),
) -> Result<Vec<f64>> {
    let n = grid.len() - 1;
    let mut c = vec![0.0; n + 1];
    let rate = |t: f64| -> Result<f64> {
        let (a, b) = ab(t);
        Ok(ode.eval(t, a, b, 0.0, 0.0)?[2])
    };
    let mut right = rate(grid[n])?;
    for i in (0..n).rev() {
        let (t0, t1) = (grid[i], grid[i + 1]);
        let left = rate(t0)?;
        let mid = rate(0.5 * (t0 + t1))?;
        let whole = (t1 - t0) / 6.0 * (left + 4.0 * mid + right);
        let tol = QUADRATURE_TOL * (t1 - t0) * left.abs().max(mid.abs()).max(right.abs());
        c[i] = c[i + 1] - adaptive_simpson(&rate, t0, t1, left, mid, right, whole, tol, 40)?;
        ensure_finite(t0, &[c[i]])?;
        right = left;
    }
    Ok(c)
}

fn check_second_order(model: &ModelParams, pen: &PenaltyParams, coeffs: &ValueCoefficients) -> Result<()> {
    if coeffs.source == CoefficientSource::InfiniteLimit {
        return Ok(());
    }
    let mut report = validity::report(model, pen, UncertaintyMode::infer(model));
    report.add_second_order(model, pen, &coeffs.grid, &coeffs.a);
    match report.check("second_order_condition") {
        Some(c) if c.failed() => {
            let t = coeffs
                .grid
                .iter()
                .zip(&coeffs.a)
                .find(|(_, &a)| !crate::model::second_order_condition(a, model, pen))
                .map_or(0.0, |(&t, _)| t);
            Err(Error::SecondOrderBreach {
                t,
                margin: c.bound.unwrap_or(f64::NAN) - c.value.unwrap_or(f64::NAN),
            })
        }
        _ => Ok(()),
    }
}

/// General affine uncertainty by backward RK4 on `grid_size` points.
pub fn solve_affine_numerical(
    model: &ModelParams,
    pen: &PenaltyParams,
    convention: CorrelationTerm,
    grid_size: usize,
) -> Result<ValueCoefficients> {
    validity::report(model, pen, UncertaintyMode::infer(model)).ensure()?;
    let n = check_grid(grid_size, model.horizon)?;
    let ode = CoefficientOde::new(model, pen, convention);
    let (grid, a, b, c) = integrate_backward(&ode, model, pen, n, None)?;
    let coeffs = ValueCoefficients::build(
        grid,
        a,
        b,
        c,
        CoefficientSource::NumericalAffine,
        convention,
        model,
        pen,
        None,
        &ode,
    )?;
    check_second_order(model, pen, &coeffs)?;
    Ok(coeffs)
}

/// Schedule-following variant: adds `-w(t)(x - Q(t))^2` to the running reward.
pub fn solve_scheduled(
    model: &ModelParams,
    pen: &PenaltyParams,
    convention: CorrelationTerm,
    sched: &ScheduleSpec,
    weight: &WeightSpec,
    grid_size: usize,
) -> Result<ValueCoefficients> {
    validity::report(model, pen, UncertaintyMode::infer(model)).ensure()?;
    if sched.horizon != model.horizon {
        return Err(Error::Schedule {
            row: None,
            reason: format!(
                "schedule horizon {} differs from model horizon {}",
                sched.horizon, model.horizon
            ),
        });
    }
    if sched.eval(0.0) != model.x0 {
        return Err(Error::Schedule {
            row: None,
            reason: format!("Q(0) = {} differs from x0 = {}", sched.eval(0.0), model.x0),
        });
    }
    if sched.eval(sched.horizon) != 0.0 {
        return Err(Error::Schedule {
            row: None,
            reason: "Q(T) must be 0".into(),
        });
    }
    let n = check_grid(grid_size, model.horizon)?;
    let sampled = SampledSchedule::new(sched, weight, n)?;
    let ode = CoefficientOde::new(model, pen, convention);
    let (grid, a, b, c) = integrate_backward(&ode, model, pen, n, Some(&sampled))?;
    let coeffs = ValueCoefficients::build(
        grid,
        a,
        b,
        c,
        CoefficientSource::NumericalScheduled,
        convention,
        model,
        pen,
        Some(sampled),
        &ode,
    )?;
    check_second_order(model, pen, &coeffs)?;
    Ok(coeffs)
}

/// `b0(t)` of the constant-uncertainty closed form, with `s = alpha + beta1 + beta2`.
pub(crate) fn constant_b0(
    model: &ModelParams,
    pen: &PenaltyParams,
    kappa: f64,
    tc: f64,
    t: f64,
) -> f64 {
    let comp = Composite::new(model, pen);
    let s = 0.5 * comp.s2;
    let ec = comp.e * comp.c;
    let tau = model.horizon - t;
    s * model.mu / ec * tau * (2.0 * tc - model.horizon - t) - comp.g * kappa * tau / ec
}

/// Closed form for `m1 = 0`; `c` by Simpson quadrature.
pub fn solve_constant_closed_form(
    model: &ModelParams,
    pen: &PenaltyParams,
    convention: CorrelationTerm,
    grid_size: usize,
) -> Result<ValueCoefficients> {
    if model.m1 != 0.0 {
        return Err(Error::Precondition(format!(
            "constant closed form requires m1 = 0 (got {})",
            model.m1
        )));
    }
    validity::report(model, pen, UncertaintyMode::infer(model)).ensure()?;
    let n = check_grid(grid_size, model.horizon)?;
    let comp = Composite::new(model, pen);
    let tc = t_crit(model, pen)?;
    let ode = CoefficientOde::new(model, pen, convention);
    let kappa = ode.kappa(0.0);
    let k = comp.k;
    let a_at = |t: f64| {
        if t == model.horizon {
            terminal_a(model, pen)
        } else {
            -comp.e * comp.c / (comp.s2 * (tc - t))
        }
    };
    let ab = |t: f64| {
        if t == model.horizon {
            return (terminal_a(model, pen), 0.0);
        }
        let a = a_at(t);
        let b = -model.eta0 - a * (2.0 * model.eta0 / k + constant_b0(model, pen, kappa, tc, t));
        (a, b)
    };
    let grid = uniform_grid(model.horizon, n);
    let (a, b): (Vec<f64>, Vec<f64>) = grid.iter().map(|&t| ab(t)).unzip();
    let c = quadrature_c(&ode, &grid, ab)?;
    let coeffs = ValueCoefficients::build(
        grid,
        a,
        b,
        c,
        CoefficientSource::ClosedFormConstant,
        convention,
        model,
        pen,
        None,
        &ode,
    )?;
    check_second_order(model, pen, &coeffs)?;
    Ok(coeffs)
}

/// `a(t)` of the linear closed form and the infinite-uncertainty limit.
fn linear_a(model: &ModelParams, pen: &PenaltyParams, t: f64) -> f64 {
    if t == model.horizon {
        return terminal_a(model, pen);
    }
    let comp = Composite::new(model, pen);
    -comp.e * comp.k / (2.0 * comp.e + (model.horizon - t) * comp.k)
}

fn linear_ab(model: &ModelParams, pen: &PenaltyParams, t: f64) -> (f64, f64) {
    if t == model.horizon {
        return (terminal_a(model, pen), 0.0);
    }
    let comp = Composite::new(model, pen);
    let a = linear_a(model, pen, t);
    let tau = model.horizon - t;
    let k = comp.k;
    let bracket = 2.0 * model.eta0 / k + 2.0 * model.mu * tau / k + model.mu * tau * tau / (2.0 * comp.e);
    (a, -model.eta0 - a * bracket)
}

/// Closed form for `m0 = 0` under `2(alpha + beta1 + beta2) = C`.
pub fn solve_linear_closed_form(
    model: &ModelParams,
    pen: &PenaltyParams,
    convention: CorrelationTerm,
    grid_size: usize,
) -> Result<ValueCoefficients> {
    if model.m0 != 0.0 {
        return Err(Error::Precondition(format!(
            "linear closed form requires m0 = 0 (got {})",
            model.m0
        )));
    }
    let mismatch = explicit_condition_mismatch(model, pen);
    if !(mismatch <= EXPLICIT_CONDITION_TOL) {
        return Err(Error::Precondition(format!(
            "2(alpha + beta1 + beta2) = C does not hold (relative mismatch {mismatch:e})"
        )));
    }
    validity::report(model, pen, UncertaintyMode::Linear).ensure()?;
    let floor = beta_floor(model, pen, model.horizon)?;
    if !(pen.beta > floor) {
        return Err(Error::Precondition(format!(
            "beta = {} must exceed the floor {floor}",
            pen.beta
        )));
    }
    let n = check_grid(grid_size, model.horizon)?;
    let ode = CoefficientOde::new(model, pen, convention);
    let grid = uniform_grid(model.horizon, n);
    let (a, b): (Vec<f64>, Vec<f64>) = grid.iter().map(|&t| linear_ab(model, pen, t)).unzip();
    let c = quadrature_c(&ode, &grid, |t| linear_ab(model, pen, t))?;
    let coeffs = ValueCoefficients::build(
        grid,
        a,
        b,
        c,
        CoefficientSource::ClosedFormLinear,
        convention,
        model,
        pen,
        None,
        &ode,
    )?;
    check_second_order(model, pen, &coeffs)?;
    Ok(coeffs)
}

/// Limit `m1 -> infinity` with `m0 = 0`, `mu = 0`.
///
/// Under [`CorrelationTerm::Consistent`] the `c` equation keeps the limit of
/// `kappa^2 / (2(C - psi))`, namely `-(rho sigma)^2 / (2(2a + gamma))`.
pub fn solve_infinite_limit(
    model: &ModelParams,
    pen: &PenaltyParams,
    convention: CorrelationTerm,
    grid_size: usize,
) -> Result<ValueCoefficients> {
    validity::report(model, pen, UncertaintyMode::InfiniteLimit).ensure()?;
    let n = check_grid(grid_size, model.horizon)?;
    let ode = CoefficientOde::infinite_limit(model, pen, convention);
    let grid = uniform_grid(model.horizon, n);
    let (a, b): (Vec<f64>, Vec<f64>) = grid.iter().map(|&t| linear_ab(model, pen, t)).unzip();
    let c = quadrature_c(&ode, &grid, |t| linear_ab(model, pen, t))?;
    ValueCoefficients::build(
        grid,
        a,
        b,
        c,
        CoefficientSource::InfiniteLimit,
        convention,
        model,
        pen,
        None,
        &ode,
    )
}

/// Picks the solver for a run: schedule-following when a schedule is
/// given, closed forms where they apply, otherwise the numerical solver.
pub fn solve(
    model: &ModelParams,
    pen: &PenaltyParams,
    mode: UncertaintyMode,
    convention: CorrelationTerm,
    schedule: Option<(&ScheduleSpec, &WeightSpec)>,
    grid_size: usize,
) -> Result<ValueCoefficients> {
    validity::report(model, pen, mode).ensure()?;
    if let Some((spec, weight)) = schedule {
        if mode == UncertaintyMode::InfiniteLimit {
            return Err(Error::Precondition(
                "schedule following is not available in the infinite-limit mode".into(),
            ));
        }
        return solve_scheduled(model, pen, convention, spec, weight, grid_size);
    }
    match mode {
        UncertaintyMode::Constant | UncertaintyMode::None => {
            solve_constant_closed_form(model, pen, convention, grid_size)
        }
        UncertaintyMode::Linear if explicit_condition_mismatch(model, pen) <= EXPLICIT_CONDITION_TOL => {
            solve_linear_closed_form(model, pen, convention, grid_size)
        }
        UncertaintyMode::Linear | UncertaintyMode::Affine => {
            solve_affine_numerical(model, pen, convention, grid_size)
        }
        UncertaintyMode::InfiniteLimit => solve_infinite_limit(model, pen, convention, grid_size),
    }
}

/// Maximizer of the quadratic `J(v, L)` and its value, by direct solution
/// of the first-order conditions.
#[derive(Debug, Clone, Copy)]
pub(crate) struct HamiltonianMax {
    pub v: f64,
    pub l: f64,
    pub delta: f64,
    pub sup: f64,
}

/// `J(v, L) = p v + q L - (eta1 + beta1) v^2 + (psi/2 - eta2 - beta2) L^2
/// + (alpha - eta1 - eta2) v L` with `p = -eta0 - Vx` and `q = p + kappa`.
pub(crate) fn maximize_j(
    model: &ModelParams,
    pen: &PenaltyParams,
    vx: f64,
    vxx: f64,
    kappa: f64,
) -> HamiltonianMax {
    let psi = model.m1 * model.m1 * (vxx + model.gamma);
    let a11 = -2.0 * (model.eta1 + pen.beta1);
    let a12 = pen.alpha - model.eta1 - model.eta2;
    let a22 = psi - 2.0 * model.eta2 - 2.0 * pen.beta2;
    let p = -model.eta0 - vx;
    let q = p + kappa;
    let delta = a11 * a22 - a12 * a12;
    // A (v, L) = (-p, -q)
    let v = (-p * a22 + q * a12) / delta;
    let l = (-q * a11 + p * a12) / delta;
    let sup = p * v + q * l + 0.5 * a11 * v * v + 0.5 * a22 * l * l + a12 * v * l;
    HamiltonianMax { v, l, delta, sup }
}

/// Left-hand side of the HJB equation at `(t, x)` using spline time
/// derivatives; zero for an exact solution.
pub fn hjb_residual(
    coeffs: &ValueCoefficients,
    model: &ModelParams,
    pen: &PenaltyParams,
    t: f64,
    x: f64,
) -> f64 {
    let (a, b, _) = coeffs.at(t);
    let (da, db, dc) = coeffs.time_derivatives(t);
    let v_t = da * x * x + db * x + dc;
    let vx = 2.0 * a * x + b;
    let vxx = 2.0 * a;
    let running = pen.beta1 * pen.r1_sq + pen.beta2 * pen.r2_sq;
    let hamiltonian = if coeffs.source == CoefficientSource::InfiniteLimit {
        let y = vx + model.eta0;
        let e = model.eta1 + pen.beta1;
        let rs = model.rho * model.sigma;
        let corr = match coeffs.convention {
            CorrelationTerm::Consistent => -rs * rs / (2.0 * (vxx + model.gamma)),
            CorrelationTerm::Printed => 0.0,
        };
        model.mu * x + running + y * y / (4.0 * e) + corr
    } else {
        let kappa = model.m0 * model.m1 * (vxx + model.gamma)
            + model.rho * model.sigma * coeffs.convention.fill_coefficient(model);
        let max = maximize_j(model, pen, vx, vxx, kappa);
        model.mu * x
            + 0.5 * model.m0 * model.m0 * (vxx + model.gamma)
            + model.rho * model.sigma * model.m0
            + running
            + max.sup
    };
    let tracking = coeffs.schedule().map_or(0.0, |s| {
        let (w, q) = s.at(t);
        -w * (x - q) * (x - q)
    });
    v_t + hamiltonian + tracking
}
