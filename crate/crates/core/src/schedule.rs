//! Target liquidation schedules, tracking weights and tracking-error metrics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::SimPath;
use crate::spline::interp_linear;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ScheduleKind {
    /// `Q(t) = x0 (1 - t/T)`.
    LinearTwap,
    /// `Q(t) = x0 (1 - (t/T)^2)`.
    Quadratic,
    /// Linear interpolation between `(t, Q)` samples.
    Tabulated { t: Vec<f64>, q: Vec<f64> },
}

/// A deterministic target position path with `Q(0) = x0` and `Q(T) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    pub x0: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
}

fn row_err(row: usize, reason: impl Into<String>) -> Error {
    Error::Schedule {
        row: Some(row),
        reason: reason.into(),
    }
}

fn sched_err(reason: impl Into<String>) -> Error {
    Error::Schedule {
        row: None,
        reason: reason.into(),
    }
}

impl ScheduleSpec {
    pub fn linear(x0: f64, horizon: f64) -> Result<Self> {
        Self::new(ScheduleKind::LinearTwap, x0, horizon)
    }

    pub fn quadratic(x0: f64, horizon: f64) -> Result<Self> {
        Self::new(ScheduleKind::Quadratic, x0, horizon)
    }

    pub fn tabulated(t: Vec<f64>, q: Vec<f64>, x0: f64, horizon: f64) -> Result<Self> {
        Self::new(ScheduleKind::Tabulated { t, q }, x0, horizon)
    }

    /// Validates and builds a schedule. Tabulated samples are checked in
    /// order; the reported row is the zero-based sample index.
    pub fn new(kind: ScheduleKind, x0: f64, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(sched_err(format!("horizon must be positive (got {horizon})")));
        }
        if !(x0 >= 0.0 && x0.is_finite()) {
            return Err(sched_err(format!(
                "a liquidation schedule needs x0 >= 0 (got {x0})"
            )));
        }
        if let ScheduleKind::Tabulated { t, q } = &kind {
            if t.len() != q.len() {
                return Err(sched_err("t and Q columns differ in length"));
            }
            if t.len() < 2 {
                return Err(sched_err("need at least two samples"));
            }
            for (i, (&ti, &qi)) in t.iter().zip(q).enumerate() {
                if !ti.is_finite() || !qi.is_finite() {
                    return Err(row_err(i, "non-finite value"));
                }
                if qi < 0.0 {
                    return Err(row_err(i, format!("Q = {qi} is negative")));
                }
                if i > 0 {
                    if ti <= t[i - 1] {
                        return Err(row_err(i, format!("t = {ti} does not increase")));
                    }
                    if qi > q[i - 1] {
                        return Err(row_err(
                            i,
                            format!("Q increases from {} to {qi}", q[i - 1]),
                        ));
                    }
                }
            }
            let last = t.len() - 1;
            if t[0] != 0.0 {
                return Err(row_err(0, format!("first sample must be at t = 0 (got {})", t[0])));
            }
            if q[0] != x0 {
                return Err(row_err(0, format!("Q(0) = {} differs from x0 = {x0}", q[0])));
            }
            if t[last] != horizon {
                return Err(row_err(
                    last,
                    format!("last sample must be at t = T = {horizon} (got {})", t[last]),
                ));
            }
            if q[last] != 0.0 {
                return Err(row_err(last, format!("Q(T) = {} must be 0", q[last])));
            }
        }
        Ok(Self { kind, x0, horizon })
    }

    /// Reads a two-column `t,Q` CSV with a header row. Error rows are
    /// zero-based data-row indices.
    pub fn from_csv(path: impl AsRef<Path>, x0: f64, horizon: f64) -> Result<Self> {
        let (t, q) = read_pairs(path.as_ref())?;
        Self::tabulated(t, q, x0, horizon)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let u = (t / self.horizon).clamp(0.0, 1.0);
        match &self.kind {
            ScheduleKind::LinearTwap => self.x0 * (1.0 - u),
            ScheduleKind::Quadratic => self.x0 * (1.0 - u * u),
            ScheduleKind::Tabulated { t: ts, q } => interp_linear(ts, q, t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum WeightSpec {
    Constant { value: f64 },
    Tabulated { t: Vec<f64>, w: Vec<f64> },
}

impl WeightSpec {
    pub fn constant(value: f64) -> Result<Self> {
        let w = WeightSpec::Constant { value };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            WeightSpec::Constant { value } => {
                if !(value.is_finite() && *value >= 0.0) {
                    return Err(sched_err(format!("weight must be finite and >= 0 (got {value})")));
                }
            }
            WeightSpec::Tabulated { t, w } => {
                if t.len() != w.len() || t.len() < 2 {
                    return Err(sched_err("weight table needs >= 2 rows of equal length"));
                }
                for (i, &wi) in w.iter().enumerate() {
                    if !(wi.is_finite() && wi >= 0.0) {
                        return Err(row_err(i, format!("weight {wi} must be finite and >= 0")));
                    }
                    if i > 0 && t[i] <= t[i - 1] {
                        return Err(row_err(i, "weight times must increase"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            WeightSpec::Constant { value } => *value,
            WeightSpec::Tabulated { t: ts, w } => interp_linear(ts, w, t),
        }
    }

    /// Reads a two-column `t,w` CSV with a header row.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let (t, w) = read_pairs(path.as_ref())?;
        let spec = WeightSpec::Tabulated { t, w };
        spec.validate()?;
        Ok(spec)
    }

    pub fn is_zero(&self) -> bool {
        match self {
            WeightSpec::Constant { value } => *value == 0.0,
            WeightSpec::Tabulated { w, .. } => w.iter().all(|&v| v == 0.0),
        }
    }
}

fn read_pairs(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let csv_err = |source| Error::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        if record.len() != 2 {
            return Err(row_err(row, format!("expected 2 columns, found {}", record.len())));
        }
        let parse = |i: usize| {
            record[i]
                .parse::<f64>()
                .map_err(|e| row_err(row, format!("column {}: {e}", i + 1)))
        };
        xs.push(parse(0)?);
        ys.push(parse(1)?);
    }
    Ok((xs, ys))
}

/// Schedule and weight sampled on a uniform solver grid with `n` steps, at
/// the nodes and the step midpoints.
#[derive(Debug, Clone)]
pub struct SampledSchedule {
    pub spec: ScheduleSpec,
    pub weight: WeightSpec,
    /// `q[2i]` is the node value at `t_i`, `q[2i+1]` the midpoint value.
    q: Vec<f64>,
    w: Vec<f64>,
}

impl SampledSchedule {
    pub fn new(spec: &ScheduleSpec, weight: &WeightSpec, n_steps: usize) -> Result<Self> {
        weight.validate()?;
        let h = spec.horizon / n_steps as f64;
        let times: Vec<f64> = (0..=2 * n_steps)
            .map(|j| if j == 2 * n_steps { spec.horizon } else { 0.5 * h * j as f64 })
            .collect();
        Ok(Self {
            spec: spec.clone(),
            weight: weight.clone(),
            q: times.iter().map(|&t| spec.eval(t)).collect(),
            w: times.iter().map(|&t| weight.eval(t)).collect(),
        })
    }

    pub fn n_steps(&self) -> usize {
        (self.q.len() - 1) / 2
    }

    /// `(w, Q)` at half-step index `j` (`j = 2i` is node `i`).
    #[inline]
    pub(crate) fn half_step(&self, j: usize) -> (f64, f64) {
        (self.w[j], self.q[j])
    }

    pub fn at(&self, t: f64) -> (f64, f64) {
        (self.weight.eval(t), self.spec.eval(t))
    }
}

/// Aggregate deviations `|x_t - Q(t)|` over a set of paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingError {
    pub max_abs: f64,
    /// Mean over paths and recorded samples of `(x_t - Q(t))^2`.
    pub mean_square: f64,
    /// Mean over paths of `|x_T - Q(T)|`.
    pub terminal_gap: f64,
    pub per_path_mean_square: Vec<f64>,
}

impl TrackingError {
    /// Combines errors computed over disjoint sets of paths.
    pub fn merge<'a>(parts: impl IntoIterator<Item = &'a TrackingError>) -> TrackingError {
        let mut max_abs: f64 = 0.0;
        let mut terminal = 0.0;
        let mut per_path = Vec::new();
        for part in parts {
            max_abs = max_abs.max(part.max_abs);
            terminal += part.terminal_gap * part.per_path_mean_square.len() as f64;
            per_path.extend_from_slice(&part.per_path_mean_square);
        }
        let n = per_path.len().max(1) as f64;
        TrackingError {
            max_abs,
            mean_square: per_path.iter().sum::<f64>() / n,
            terminal_gap: terminal / n,
            per_path_mean_square: per_path,
        }
    }
}

pub fn tracking_error(paths: &[SimPath], sched: &ScheduleSpec) -> TrackingError {
    let mut max_abs: f64 = 0.0;
    let mut per_path = Vec::with_capacity(paths.len());
    let mut terminal = 0.0;
    for path in paths {
        let mut sum_sq = 0.0;
        for (&t, &x) in path.t.iter().zip(&path.x) {
            let dev = x - sched.eval(t);
            max_abs = max_abs.max(dev.abs());
            sum_sq += dev * dev;
        }
        per_path.push(sum_sq / path.t.len() as f64);
        let (&t_end, &x_end) = (path.t.last().unwrap(), path.x.last().unwrap());
        terminal += (x_end - sched.eval(t_end)).abs();
    }
    let n = paths.len().max(1) as f64;
    TrackingError {
        max_abs,
        mean_square: per_path.iter().sum::<f64>() / n,
        terminal_gap: terminal / n,
        per_path_mean_square: per_path,
    }
}
