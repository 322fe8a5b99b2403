//! Named multi-leg scenarios: validate, solve and simulate each leg, with
//! failures collected per leg instead of aborting the run.

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::Result;
use crate::model::UncertaintyMode;
use crate::policy::{boundary_defined, buy_sell_boundary, Monotonicity};
use crate::schedule::{tracking_error, ScheduleSpec, TrackingError, WeightSpec};
use crate::sim::{simulate_path, summarize, MCResult, PathSummary, SimPath, StepLedger};
use crate::validity::{self, ValidityReport};
use crate::value::{self, ValueCoefficients};

#[derive(Debug, Clone)]
pub struct Leg {
    pub label: String,
    pub config: RunConfig,
    pub schedule: Option<(ScheduleSpec, WeightSpec)>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub legs: Vec<Leg>,
}

/// Rate statistics over every recorded sample of every path.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct RateStats {
    pub mean_v: f64,
    pub mean_l: f64,
    /// Fraction of samples with `v > L`.
    pub market_lead_fraction: f64,
    /// Fraction of samples with `L > v`.
    pub limit_lead_fraction: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LegReport {
    pub label: String,
    pub config: RunConfig,
    pub validity: ValidityReport,
    pub initial_value: f64,
    pub mc: MCResult,
    pub rates: RateStats,
    pub ledger: StepLedger,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tracking: Option<TrackingError>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundary: Option<Monotonicity>,
    /// Leading paths kept in full for export.
    #[serde(skip)]
    pub exported: Vec<SimPath>,
    #[serde(skip)]
    pub coefficients: Option<ValueCoefficients>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LegFailure {
    pub label: String,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioReport {
    pub name: String,
    pub legs: Vec<LegReport>,
    pub failures: Vec<LegFailure>,
    /// All completed legs drew identical noise (equal checksums).
    pub shared_noise: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub scenarios: Vec<ScenarioReport>,
}

impl SuiteReport {
    pub fn failure_count(&self) -> usize {
        self.scenarios.iter().map(|s| s.failures.len()).sum()
    }
}

impl ScenarioReport {
    pub fn leg(&self, label: &str) -> Option<&LegReport> {
        self.legs.iter().find(|l| l.label == label)
    }
}

struct PathStats {
    summary: PathSummary,
    tracking: Option<TrackingError>,
    samples: usize,
    sum_v: f64,
    sum_l: f64,
    market_lead: usize,
    limit_lead: usize,
    ledger: StepLedger,
    path: Option<SimPath>,
}

/// Validates, solves and simulates one leg.
pub fn run_leg(leg: &Leg) -> Result<LegReport> {
    let cfg = &leg.config;
    let (model, pen) = (&cfg.model, &cfg.penalties);
    let mut report = validity::report(model, pen, cfg.run.mode);
    report.ensure()?;
    let coeffs = value::solve(
        model,
        pen,
        cfg.run.mode,
        cfg.run.convention,
        leg.schedule.as_ref().map(|(s, w)| (s, w)),
        cfg.grid_points(),
    )?;
    report.add_second_order(model, pen, &coeffs.grid, &coeffs.a);
    report.ensure()?;

    let sim = cfg.sim_config();
    let export = cfg.sim.export_paths;
    let stats = sim
        .execution
        .map(sim.n_paths, |i| -> Result<PathStats> {
            let path = simulate_path(model, pen, &coeffs, &sim, i as u64)?;
            let tracking = leg
                .schedule
                .as_ref()
                .map(|(spec, _)| tracking_error(std::slice::from_ref(&path), spec));
            let market_lead = path.v.iter().zip(&path.l).filter(|(v, l)| v > l).count();
            let limit_lead = path.v.iter().zip(&path.l).filter(|(v, l)| l > v).count();
            Ok(PathStats {
                summary: PathSummary::from(&path),
                tracking,
                samples: path.t.len(),
                sum_v: path.v.iter().sum(),
                sum_l: path.l.iter().sum(),
                market_lead,
                limit_lead,
                ledger: path.ledger,
                path: (i < export).then_some(path),
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let samples: usize = stats.iter().map(|s| s.samples).sum();
    let n = samples as f64;
    let rates = RateStats {
        mean_v: stats.iter().map(|s| s.sum_v).sum::<f64>() / n,
        mean_l: stats.iter().map(|s| s.sum_l).sum::<f64>() / n,
        market_lead_fraction: stats.iter().map(|s| s.market_lead).sum::<usize>() as f64 / n,
        limit_lead_fraction: stats.iter().map(|s| s.limit_lead).sum::<usize>() as f64 / n,
    };
    let mut ledger = StepLedger::default();
    for s in &stats {
        ledger.opposite_sign_steps += s.ledger.opposite_sign_steps;
        ledger.below_boundary_steps += s.ledger.below_boundary_steps;
        ledger.cap_exceeded_steps += s.ledger.cap_exceeded_steps;
    }
    let tracking = leg
        .schedule
        .as_ref()
        .map(|_| TrackingError::merge(stats.iter().filter_map(|s| s.tracking.as_ref())));
    let boundary = (cfg.run.mode == UncertaintyMode::Constant || cfg.run.mode == UncertaintyMode::None)
        .then(|| boundary_defined(model, pen))
        .filter(|&d| d)
        .and_then(|_| buy_sell_boundary(model, pen, cfg.run.convention, &coeffs.grid).ok())
        .map(|b| b.classification);

    let mut summaries = Vec::with_capacity(stats.len());
    let mut exported = Vec::new();
    for s in stats {
        summaries.push(s.summary);
        if let Some(p) = s.path {
            exported.push(p);
        }
    }
    Ok(LegReport {
        label: leg.label.clone(),
        config: cfg.clone(),
        validity: report,
        initial_value: coeffs.initial_value(),
        mc: summarize(summaries),
        rates,
        ledger,
        tracking,
        boundary,
        exported,
        coefficients: Some(coeffs),
    })
}

pub fn run_scenario(scenario: &Scenario) -> ScenarioReport {
    let mut legs = Vec::new();
    let mut failures = Vec::new();
    for leg in &scenario.legs {
        match run_leg(leg) {
            Ok(r) => legs.push(r),
            Err(e) => failures.push(LegFailure {
                label: leg.label.clone(),
                error: e.to_string(),
            }),
        }
    }
    let shared_noise = legs
        .windows(2)
        .all(|w| w[0].mc.noise_checksum == w[1].mc.noise_checksum);
    ScenarioReport {
        name: scenario.name.clone(),
        legs,
        failures,
        shared_noise,
    }
}

/// Runs every scenario in order; deterministic given the configured seeds.
pub fn run_scenario_suite(scenarios: &[Scenario]) -> SuiteReport {
    SuiteReport {
        scenarios: scenarios.iter().map(run_scenario).collect(),
    }
}

fn leg(label: &str, config: RunConfig) -> Leg {
    Leg {
        label: label.into(),
        config,
        schedule: None,
    }
}

fn with_uncertainty(base: &RunConfig, p0: f64, p1: f64, mode: UncertaintyMode) -> RunConfig {
    let mut c = base.clone();
    c.model = c.model.with_affine_uncertainty(p0, p1);
    c.run.mode = mode;
    c
}

/// The standard scenario set, built on `base` (which supplies the market
/// parameters, the simulation settings and the shared seed).
///
/// - `uncertainty`: constant (`p0 = 0.1`), linear (`p1 = 0.1`) and no fill
///   uncertainty.
/// - `impact`: affine (`p0 = p1 = 0.05`) with `(eta1, eta2)` of
///   `(0.1, 0.05)` and `(0.05, 0.1)`.
/// - `beta`: `eta1 = eta2 = 0.1`, `p0 = 0.1`, `beta` of `1e-4` and `0.1`.
/// - `schedule-quadratic` and `schedule-linear`: constant uncertainty
///   (`p0 = 0.1`), weight `0` and `1e-4`.
pub fn standard_scenarios(base: &RunConfig) -> Result<Vec<Scenario>> {
    let uncertainty = Scenario {
        name: "uncertainty".into(),
        legs: vec![
            leg("constant", with_uncertainty(base, 0.1, 0.0, UncertaintyMode::Constant)),
            leg("linear", with_uncertainty(base, 0.0, 0.1, UncertaintyMode::Linear)),
            leg("none", with_uncertainty(base, 0.0, 0.0, UncertaintyMode::None)),
        ],
    };

    let affine = with_uncertainty(base, 0.05, 0.05, UncertaintyMode::Affine);
    let impact_leg = |label: &str, eta1: f64, eta2: f64| {
        let mut c = affine.clone();
        c.model.eta1 = eta1;
        c.model.eta2 = eta2;
        leg(label, c)
    };
    let impact = Scenario {
        name: "impact".into(),
        legs: vec![
            impact_leg("cheap-limit", 0.1, 0.05),
            impact_leg("cheap-market", 0.05, 0.1),
        ],
    };

    let beta_leg = |label: &str, beta: f64| {
        let mut c = with_uncertainty(base, 0.1, 0.0, UncertaintyMode::Constant);
        c.model.eta1 = 0.1;
        c.model.eta2 = 0.1;
        c.penalties.beta = beta;
        leg(label, c)
    };
    let beta = Scenario {
        name: "beta".into(),
        legs: vec![beta_leg("low-beta", 1e-4), beta_leg("high-beta", 0.1)],
    };

    let constant = with_uncertainty(base, 0.1, 0.0, UncertaintyMode::Constant);
    let (x0, horizon) = (constant.model.x0, constant.model.horizon);
    let schedule_scenario = |name: &str, spec: ScheduleSpec| -> Result<Scenario> {
        let mut legs = Vec::new();
        for (label, w) in [("unweighted", 0.0), ("weighted", 1e-4)] {
            legs.push(Leg {
                label: label.into(),
                config: constant.clone(),
                schedule: Some((spec.clone(), WeightSpec::constant(w)?)),
            });
        }
        Ok(Scenario {
            name: name.into(),
            legs,
        })
    };

    Ok(vec![
        uncertainty,
        impact,
        beta,
        schedule_scenario("schedule-quadratic", ScheduleSpec::quadratic(x0, horizon)?)?,
        schedule_scenario("schedule-linear", ScheduleSpec::linear(x0, horizon)?)?,
    ])
}
