//! Monte Carlo simulation of controlled executions with PNL bookkeeping.
//!
//! Each step applies rates evaluated at the left endpoint. With
//! `dx = d + n`, `d = -(v + L) dt`, `n = m(L) dZ`, trading cash is booked as
//! `(S_mid + h) d + (S_i + h) n` with `S_mid` the step-average price, which
//! makes the direct and expanded PNL agree exactly when there is no noise.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::params::{ModelParams, PenaltyParams};
use crate::policy::{boundary_defined, limit_rate_from_coefficients, rates_from_coefficients};
use crate::rng::NoiseStream;
use crate::value::{CoefficientSource, ValueCoefficients};

/// A user-supplied feedback rule `(t, x) -> (v, L)`.
pub trait RatePolicy: Send + Sync {
    fn rates(&self, t: f64, x: f64) -> (f64, f64);
}

impl<F> RatePolicy for F
where
    F: Fn(f64, f64) -> (f64, f64) + Send + Sync,
{
    fn rates(&self, t: f64, x: f64) -> (f64, f64) {
        self(t, x)
    }
}

/// Time-independent rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantRates {
    pub v: f64,
    pub l: f64,
}

impl RatePolicy for ConstantRates {
    fn rates(&self, _t: f64, _x: f64) -> (f64, f64) {
        (self.v, self.l)
    }
}

#[derive(Clone)]
pub enum PolicyKind {
    /// Feedback rates from the value-function coefficients.
    Optimal,
    /// Market orders only: `L = 0`, `v = -(V_x + eta0) / (2 (eta1 + beta1))`.
    InfiniteLimit,
    User(Arc<dyn RatePolicy>),
}

impl PolicyKind {
    pub fn user(policy: impl RatePolicy + 'static) -> Self {
        PolicyKind::User(Arc::new(policy))
    }

    /// TWAP split evenly between market and limit orders.
    pub fn twap(model: &ModelParams) -> Self {
        let rate = model.x0 / model.horizon;
        Self::user(ConstantRates {
            v: 0.5 * rate,
            l: 0.5 * rate,
        })
    }
}

impl fmt::Debug for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyKind::Optimal => write!(f, "Optimal"),
            PolicyKind::InfiniteLimit => write!(f, "InfiniteLimit"),
            PolicyKind::User(_) => write!(f, "User"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub policy: PolicyKind,
    pub record_every: usize,
    pub execution: Execution,
}

impl SimConfig {
    pub fn new(n_steps: usize, n_paths: usize, seed: u64) -> Self {
        Self {
            n_steps,
            n_paths,
            seed,
            policy: PolicyKind::Optimal,
            record_every: 1,
            execution: Execution::default(),
        }
    }

    pub fn with_policy(mut self, policy: PolicyKind) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_record_every(mut self, every: usize) -> Self {
        self.record_every = every;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::param("n_steps", "must be >= 1"));
        }
        if self.n_paths == 0 {
            return Err(Error::param("n_paths", "must be >= 1"));
        }
        if self.record_every == 0 {
            return Err(Error::param("record_every", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerms {
    /// `-beta x_T^2`.
    pub terminal_penalty: f64,
    /// Sum of `g dt` over the steps.
    pub g_integral: f64,
    /// Sum of `-w (x - Q)^2 dt`; zero without a schedule.
    pub tracking_penalty: f64,
    /// `-beta x_T^2 + gamma/2 x_T^2 + g_integral + tracking_penalty`, whose
    /// mean estimates `V(0, x0)`. The compensated PNL differs from it by
    /// `-gamma/2 x0^2` and zero-mean noise integrals.
    pub objective: f64,
}

/// Step counts tagged for diagnostics; the dynamics are never altered.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepLedger {
    /// Steps where `v` and `L` have opposite signs.
    pub opposite_sign_steps: usize,
    /// Steps starting below the buy-sell boundary (when it is defined).
    pub below_boundary_steps: usize,
    /// Steps where `v^2 > R1` or `L^2 > R2`.
    pub cap_exceeded_steps: usize,
}

/// One simulated execution. Vectors hold the recorded samples: every
/// `record_every`-th step plus the final time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimPath {
    pub path_index: u64,
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub s_tilde: Vec<f64>,
    pub v: Vec<f64>,
    pub l: Vec<f64>,
    pub boundary: Option<Vec<f64>>,
    pub schedule: Option<Vec<f64>>,
    pub pnl_direct: f64,
    pub pnl_expanded: f64,
    pub compensated_pnl: f64,
    /// Sum of `[alpha v L + beta1 (R1 - v^2) + beta2 (R2 - L^2)] dt`.
    pub penalty_integral: f64,
    pub objective_terms: ObjectiveTerms,
    pub ledger: StepLedger,
    pub noise_checksum: u64,
}

impl SimPath {
    pub fn final_position(&self) -> f64 {
        *self.x.last().unwrap()
    }

    /// CSV with header `t,x,S,Stilde,v,L,P,Q`; `P` and `Q` are empty when
    /// undefined.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            t: f64,
            x: f64,
            #[serde(rename = "S")]
            s: f64,
            #[serde(rename = "Stilde")]
            s_tilde: f64,
            v: f64,
            #[serde(rename = "L")]
            l: f64,
            #[serde(rename = "P")]
            p: Option<f64>,
            #[serde(rename = "Q")]
            q: Option<f64>,
        }
        let mut w = csv::Writer::from_writer(out);
        for i in 0..self.t.len() {
            w.serialize(Row {
                t: self.t[i],
                x: self.x[i],
                s: self.s[i],
                s_tilde: self.s_tilde[i],
                v: self.v[i],
                l: self.l[i],
                p: self.boundary.as_ref().map(|p| p[i]),
                q: self.schedule.as_ref().map(|q| q[i]),
            })
            .map_err(|e| Error::Csv {
                path: "<path>".into(),
                source: e,
            })?;
        }
        w.flush().map_err(|e| Error::io("<path>", e))
    }
}

/// `|pnl_direct - pnl_expanded|`.
pub fn pnl_consistency(path: &SimPath) -> f64 {
    (path.pnl_direct - path.pnl_expanded).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub pnl: f64,
    pub compensated_pnl: f64,
    pub final_position: f64,
    pub objective: f64,
    pub noise_checksum: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCResult {
    pub mean_objective: f64,
    /// Sample standard deviation over `sqrt(n_paths)`.
    pub stderr: f64,
    pub mean_final_position: f64,
    pub mean_abs_final_position: f64,
    pub path_summaries: Vec<PathSummary>,
    /// FNV-1a over the per-path noise checksums in path order.
    pub noise_checksum: u64,
}

/// Coefficient lookup on the simulation grid: exact node values when the
/// grids coincide, spline values otherwise.
struct CoefficientLookup<'a> {
    coeffs: &'a ValueCoefficients,
    aligned: bool,
}

impl<'a> CoefficientLookup<'a> {
    fn new(coeffs: &'a ValueCoefficients, n_steps: usize, horizon: f64) -> Self {
        Self {
            coeffs,
            aligned: coeffs.n_steps() == n_steps && coeffs.horizon() == horizon,
        }
    }

    #[inline]
    fn ab(&self, i: usize, t: f64) -> (f64, f64) {
        if self.aligned {
            (self.coeffs.a[i], self.coeffs.b[i])
        } else {
            let (a, b, _) = self.coeffs.at(t);
            (a, b)
        }
    }

    #[inline]
    fn schedule(&self, t: f64) -> Option<(f64, f64)> {
        self.coeffs.schedule().map(|s| s.at(t))
    }
}

struct Simulator<'a> {
    model: &'a ModelParams,
    pen: &'a PenaltyParams,
    lookup: CoefficientLookup<'a>,
    config: &'a SimConfig,
    dt: f64,
    boundary: bool,
}

enum Record {
    Full,
    Summary,
}

impl<'a> Simulator<'a> {
    fn new(
        model: &'a ModelParams,
        pen: &'a PenaltyParams,
        coeffs: &'a ValueCoefficients,
        config: &'a SimConfig,
    ) -> Result<Self> {
        config.validate()?;
        if model.rho.abs() >= 1.0 {
            return Err(Error::param("rho", format!("|rho| must be < 1 (got {})", model.rho)));
        }
        if coeffs.horizon() != model.horizon {
            return Err(Error::Precondition(format!(
                "coefficients cover [0, {}] but the horizon is {}",
                coeffs.horizon(),
                model.horizon
            )));
        }
        Ok(Self {
            model,
            pen,
            lookup: CoefficientLookup::new(coeffs, config.n_steps, model.horizon),
            config,
            dt: model.horizon / config.n_steps as f64,
            boundary: boundary_defined(model, pen),
        })
    }

    fn time(&self, i: usize) -> f64 {
        if i == self.config.n_steps {
            self.model.horizon
        } else {
            self.dt * i as f64
        }
    }

    #[inline]
    fn rates(&self, i: usize, t: f64, x: f64) -> (f64, f64) {
        let optimal_source_is_limit = self.lookup.coeffs.source == CoefficientSource::InfiniteLimit;
        match &self.config.policy {
            PolicyKind::Optimal if !optimal_source_is_limit => {
                let (a, b) = self.lookup.ab(i, t);
                let (v, l, _, _) = rates_from_coefficients(self.model, self.pen, a, b, x);
                (v, l)
            }
            PolicyKind::Optimal | PolicyKind::InfiniteLimit => {
                let (a, b) = self.lookup.ab(i, t);
                (limit_rate_from_coefficients(self.model, self.pen, a, b, x), 0.0)
            }
            PolicyKind::User(p) => p.rates(t, x),
        }
    }

    fn boundary_at(&self, i: usize, t: f64) -> f64 {
        let (a, b) = self.lookup.ab(i, t);
        -(b + self.model.eta0) / (2.0 * a)
    }

    fn run(&self, path_index: u64, record: Record) -> SimPath {
        let m = self.model;
        let p = self.pen;
        let n = self.config.n_steps;
        let dt = self.dt;
        let every = self.config.record_every;
        let mut noise = NoiseStream::new(self.config.seed, path_index, dt, m.rho);
        let full = matches!(record, Record::Full);
        let capacity = if full { n / every + 2 } else { 0 };
        let mut rec = Recorder::with_capacity(capacity, self.boundary, self.lookup.coeffs.schedule().is_some());

        let mut x = m.x0;
        let mut s = m.s0;
        let mut cash = 0.0;
        let mut flow = 0.0; // sum of [mu xbar + rho sigma m + gamma/2 m^2 + h (v + L)] dt
        let mut price_noise = 0.0; // sum of sigma x dW
        let mut fill_noise = 0.0; // sum of h m dZ
        let mut penalties = 0.0;
        let mut tracking = 0.0;
        let mut ledger = StepLedger::default();

        for i in 0..n {
            let t = self.time(i);
            let (v, l) = self.rates(i, t, x);
            let h = m.temporary_impact(v, l);
            let fill = m.fill_uncertainty(l);
            if full && i % every == 0 {
                rec.push(self, i, t, x, s, h, v, l);
            }
            if v * l < 0.0 {
                ledger.opposite_sign_steps += 1;
            }
            if self.boundary && x < self.boundary_at(i, t) {
                ledger.below_boundary_steps += 1;
            }
            if v * v > p.r1_sq || l * l > p.r2_sq {
                ledger.cap_exceeded_steps += 1;
            }
            if let Some((w, q)) = self.lookup.schedule(t) {
                tracking -= w * (x - q) * (x - q) * dt;
            }

            let (dz, dw) = noise.increments();
            let drift = -(v + l) * dt;
            let diffusion = fill * dz;
            let dx = drift + diffusion;
            let x_next = x + dx;
            let s_next = s + m.gamma * dx + m.mu * dt + m.sigma * dw;
            let s_mid = 0.5 * (s + s_next);
            let x_mid = 0.5 * (x + x_next);

            cash += (s_mid + h) * drift + (s + h) * diffusion;
            flow += (m.mu * x_mid + m.rho * m.sigma * fill + 0.5 * m.gamma * fill * fill + h * (v + l)) * dt;
            price_noise += m.sigma * x * dw;
            fill_noise += h * fill * dz;
            penalties += (p.alpha * v * l + p.beta1 * (p.r1_sq - v * v) + p.beta2 * (p.r2_sq - l * l)) * dt;

            x = x_next;
            s = s_next;
        }
        if full {
            let t = m.horizon;
            let (v, l) = self.rates(n, t, x);
            rec.push(self, n, t, x, s, m.temporary_impact(v, l), v, l);
        }

        let x0 = m.x0;
        let pnl_direct = x * s - x0 * m.s0 - cash;
        let pnl_expanded = 0.5 * m.gamma * (x * x - x0 * x0) + flow + price_noise - fill_noise;
        let terminal_penalty = -p.beta * x * x;
        let g_integral = flow + penalties;
        let objective = terminal_penalty + 0.5 * m.gamma * x * x + g_integral + tracking;
        SimPath {
            path_index,
            t: rec.t,
            x: if full { rec.x } else { vec![x] },
            s: rec.s,
            s_tilde: rec.s_tilde,
            v: rec.v,
            l: rec.l,
            boundary: rec.boundary,
            schedule: rec.schedule,
            pnl_direct,
            pnl_expanded,
            compensated_pnl: pnl_direct + penalties + terminal_penalty,
            penalty_integral: penalties,
            objective_terms: ObjectiveTerms {
                terminal_penalty,
                g_integral,
                tracking_penalty: tracking,
                objective,
            },
            ledger,
            noise_checksum: noise.checksum(),
        }
    }
}

#[derive(Default)]
struct Recorder {
    t: Vec<f64>,
    x: Vec<f64>,
    s: Vec<f64>,
    s_tilde: Vec<f64>,
    v: Vec<f64>,
    l: Vec<f64>,
    boundary: Option<Vec<f64>>,
    schedule: Option<Vec<f64>>,
}

impl Recorder {
    fn with_capacity(n: usize, boundary: bool, schedule: bool) -> Self {
        Self {
            t: Vec::with_capacity(n),
            x: Vec::with_capacity(n),
            s: Vec::with_capacity(n),
            s_tilde: Vec::with_capacity(n),
            v: Vec::with_capacity(n),
            l: Vec::with_capacity(n),
            boundary: boundary.then(|| Vec::with_capacity(n)),
            schedule: schedule.then(|| Vec::with_capacity(n)),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn push(&mut self, sim: &Simulator<'_>, i: usize, t: f64, x: f64, s: f64, h: f64, v: f64, l: f64) {
        self.t.push(t);
        self.x.push(x);
        self.s.push(s);
        self.s_tilde.push(s + h);
        self.v.push(v);
        self.l.push(l);
        if let Some(p) = self.boundary.as_mut() {
            p.push(sim.boundary_at(i, t));
        }
        if let Some(q) = self.schedule.as_mut() {
            q.push(sim.lookup.schedule(t).map_or(f64::NAN, |(_, q)| q));
        }
    }
}

pub fn simulate_path(
    model: &ModelParams,
    pen: &PenaltyParams,
    coeffs: &ValueCoefficients,
    config: &SimConfig,
    path_index: u64,
) -> Result<SimPath> {
    Ok(Simulator::new(model, pen, coeffs, config)?.run(path_index, Record::Full))
}

/// Full recorded paths for indices `0..n_paths`.
pub fn simulate_paths(
    model: &ModelParams,
    pen: &PenaltyParams,
    coeffs: &ValueCoefficients,
    config: &SimConfig,
) -> Result<Vec<SimPath>> {
    let sim = Simulator::new(model, pen, coeffs, config)?;
    Ok(config
        .execution
        .map(config.n_paths, |i| sim.run(i as u64, Record::Full)))
}

fn fnv_fold(values: impl Iterator<Item = u64>) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for byte in v.to_le_bytes() {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    hash
}

/// Monte Carlo estimate of `V(0, x0) = E[-beta x_T^2 + gamma/2 x_T^2 + int g dt]`.
pub fn estimate_objective(
    model: &ModelParams,
    pen: &PenaltyParams,
    coeffs: &ValueCoefficients,
    config: &SimConfig,
) -> Result<MCResult> {
    let sim = Simulator::new(model, pen, coeffs, config)?;
    let summaries: Vec<PathSummary> = config.execution.map(config.n_paths, |i| {
        PathSummary::from(&sim.run(i as u64, Record::Summary))
    });
    Ok(summarize(summaries))
}

pub(crate) fn summarize(summaries: Vec<PathSummary>) -> MCResult {
    let n = summaries.len() as f64;
    let mean = summaries.iter().map(|s| s.objective).sum::<f64>() / n;
    let var = if summaries.len() > 1 {
        summaries.iter().map(|s| (s.objective - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    MCResult {
        mean_objective: mean,
        stderr: (var / n).sqrt(),
        mean_final_position: summaries.iter().map(|s| s.final_position).sum::<f64>() / n,
        mean_abs_final_position: summaries.iter().map(|s| s.final_position.abs()).sum::<f64>() / n,
        noise_checksum: fnv_fold(summaries.iter().map(|s| s.noise_checksum)),
        path_summaries: summaries,
    }
}

impl From<&SimPath> for PathSummary {
    fn from(p: &SimPath) -> Self {
        PathSummary {
            pnl: p.pnl_direct,
            compensated_pnl: p.compensated_pnl,
            final_position: p.final_position(),
            objective: p.objective_terms.objective,
            noise_checksum: p.noise_checksum,
        }
    }
}

impl MCResult {
    pub fn from_paths(paths: &[SimPath]) -> Self {
        summarize(paths.iter().map(PathSummary::from).collect())
    }
}
