//! Structured validity report over model and penalty parameters.
//!
//! Building a report never fails. Solvers call [`ValidityReport::ensure`]
//! and refuse to run on hard failures; advisory and informational checks
//! are reported but never block.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    admissible_alpha_interval, beta_floor, compute_c, explicit_condition_mismatch,
    in_relaxed_regime, infinite_limit_beta_floor, infinite_limit_t_max, second_order_condition,
    t_crit, t_max, Horizon, UncertaintyMode, EXPLICIT_CONDITION_TOL,
};
use crate::params::{ModelParams, PenaltyParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Severity {
    Hard,
    Advisory,
    Info,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub severity: Severity,
    pub status: Status,
    pub value: Option<f64>,
    pub bound: Option<f64>,
    pub detail: String,
}

impl Check {
    fn new(name: &str, severity: Severity, pass: bool) -> Self {
        Self {
            name: name.to_string(),
            severity,
            status: if pass { Status::Pass } else { Status::Fail },
            value: None,
            bound: None,
            detail: String::new(),
        }
    }

    fn skipped(name: &str, severity: Severity, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            severity,
            status: Status::Skipped,
            value: None,
            bound: None,
            detail: detail.into(),
        }
    }

    fn value(mut self, value: f64) -> Self {
        self.value = Some(value);
        self
    }

    fn bound(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self
    }

    fn detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    pub fn failed(&self) -> bool {
        self.status == Status::Fail
    }

    pub fn is_hard_failure(&self) -> bool {
        self.severity == Severity::Hard && self.failed()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub mode: UncertaintyMode,
    pub checks: Vec<Check>,
}

impl ValidityReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn hard_failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| c.is_hard_failure()).collect()
    }

    pub fn passed(&self) -> bool {
        self.hard_failures().is_empty()
    }

    pub fn ensure(&self) -> Result<()> {
        let failed: Vec<String> = self
            .hard_failures()
            .iter()
            .map(|c| {
                if c.detail.is_empty() {
                    c.name.clone()
                } else {
                    format!("{} ({})", c.name, c.detail)
                }
            })
            .collect();
        if failed.is_empty() {
            Ok(())
        } else {
            Err(Error::Validity(failed))
        }
    }

    /// Appends the second-order condition evaluated over solved `a(t)`
    /// samples.
    pub fn add_second_order(&mut self, model: &ModelParams, pen: &PenaltyParams, grid: &[f64], a: &[f64]) {
        let m1_sq = model.m1 * model.m1;
        let bound = compute_c(model, pen) - model.gamma * m1_sq;
        let mut worst = (f64::NEG_INFINITY, 0.0);
        let mut breach = None;
        for (&t, &av) in grid.iter().zip(a) {
            let lhs = 2.0 * m1_sq * av;
            if lhs > worst.0 {
                worst = (lhs, t);
            }
            if breach.is_none() && !second_order_condition(av, model, pen) {
                breach = Some(t);
            }
        }
        let check = Check::new("second_order_condition", Severity::Hard, breach.is_none())
            .value(worst.0)
            .bound(bound);
        let check = match breach {
            Some(t) => check.detail(format!("2 m1^2 a(t) >= C - gamma m1^2 at t = {t}")),
            None => check.detail(format!("max 2 m1^2 a(t) at t = {}", worst.1)),
        };
        self.checks.retain(|c| c.name != "second_order_condition");
        self.checks.push(check);
    }
}

/// Runs every check that applies to `mode`.
pub fn report(model: &ModelParams, pen: &PenaltyParams, mode: UncertaintyMode) -> ValidityReport {
    let mut checks = Vec::new();

    let model_issues = model.invariant_violations();
    checks.push(
        Check::new("model_invariants", Severity::Hard, model_issues.is_empty())
            .detail(model_issues.join("; ")),
    );
    let pen_issues = pen.invariant_violations();
    checks.push(
        Check::new("penalty_invariants", Severity::Hard, pen_issues.is_empty())
            .detail(pen_issues.join("; ")),
    );
    let mode_issue = mode.consistency_error(model);
    checks.push(
        Check::new("mode_consistency", Severity::Hard, mode_issue.is_none())
            .detail(mode_issue.unwrap_or_default()),
    );

    let half_gamma = 0.5 * model.gamma;
    let beta_ok = pen.beta > half_gamma;
    checks.push(
        Check::new("beta_floor", Severity::Hard, beta_ok)
            .value(pen.beta)
            .bound(half_gamma)
            .detail("beta > gamma/2"),
    );

    let c = compute_c(model, pen);
    let interval = admissible_alpha_interval(model, pen);
    let alpha_ok = interval.contains(pen.alpha);
    let alpha_severity = if model.m1 == 0.0 {
        Severity::Hard
    } else {
        Severity::Advisory
    };
    let alpha_bound = if pen.alpha >= interval.hi {
        interval.hi
    } else {
        interval.lo
    };
    checks.push(
        Check::new("alpha_interval", alpha_severity, alpha_ok)
            .value(pen.alpha)
            .bound(alpha_bound)
            .detail(format!(
                "alpha in ({}, {}), C = {c}",
                interval.lo, interval.hi
            )),
    );

    checks.push(horizon_check(model, pen, mode, c, beta_ok));

    if mode == UncertaintyMode::Linear {
        let mismatch = explicit_condition_mismatch(model, pen);
        checks.push(
            Check::new(
                "explicit_linear_condition",
                Severity::Advisory,
                mismatch <= EXPLICIT_CONDITION_TOL,
            )
            .value(mismatch)
            .bound(EXPLICIT_CONDITION_TOL)
            .detail(format!(
                "2(alpha+beta1+beta2) = {} vs C = {c}; closed form needs equality",
                2.0 * (pen.alpha + pen.beta1 + pen.beta2)
            )),
        );
    } else {
        checks.push(Check::skipped(
            "explicit_linear_condition",
            Severity::Advisory,
            "linear mode only",
        ));
    }

    if model.eta1 == model.eta2 {
        checks.push(
            Check::new("boundary_regime", Severity::Info, true).detail("eta1 = eta2"),
        );
    } else {
        checks.push(
            Check::new("boundary_regime", Severity::Advisory, in_relaxed_regime(model, pen))
                .detail("eta1 - eta2 < 2 beta2 + alpha and eta2 - eta1 < 2 beta1 + alpha"),
        );
    }

    let adverse = model.has_adverse_selection();
    checks.push(
        Check::new("adverse_selection", Severity::Info, true)
            .value(if adverse { 1.0 } else { 0.0 })
            .detail(if adverse {
                "rho m(L) < 0 for L >= 0"
            } else {
                "rho m(L) < 0 does not hold for all L >= 0"
            }),
    );

    ValidityReport { mode, checks }
}

fn horizon_check(
    model: &ModelParams,
    pen: &PenaltyParams,
    mode: UncertaintyMode,
    c: f64,
    beta_ok: bool,
) -> Check {
    const NAME: &str = "horizon";
    if !beta_ok {
        return Check::skipped(NAME, Severity::Hard, "requires beta > gamma/2");
    }
    match mode {
        UncertaintyMode::InfiniteLimit => {
            let bound = infinite_limit_t_max(model, pen).unwrap_or(f64::NAN);
            let floor = infinite_limit_beta_floor(model, pen, model.horizon)
                .map(|f| format!("beta floor {f}"))
                .unwrap_or_else(|e| e.to_string());
            Check::new(NAME, Severity::Hard, model.horizon < bound)
                .value(model.horizon)
                .bound(bound)
                .detail(format!("T < T_max in the m1 -> infinity limit; {floor}"))
        }
        _ if model.m1 == 0.0 => {
            if !(c > 0.0) {
                return Check::skipped(NAME, Severity::Info, "requires C > 0");
            }
            match t_crit(model, pen) {
                Ok(tc) => Check::new(NAME, Severity::Info, model.horizon < tc)
                    .value(model.horizon)
                    .bound(tc)
                    .detail("T < T_crit"),
                Err(e) => Check::skipped(NAME, Severity::Info, e.to_string()),
            }
        }
        _ if model.m0 == 0.0 => match t_max(model, pen) {
            Ok(Horizon::Unbounded) => Check::new(NAME, Severity::Hard, true)
                .value(model.horizon)
                .detail("T_max unbounded (C >= gamma m1^2)"),
            Ok(Horizon::Bounded(bound)) => {
                let floor = beta_floor(model, pen, model.horizon)
                    .map(|f| format!("beta floor {f}"))
                    .unwrap_or_else(|e| e.to_string());
                Check::new(NAME, Severity::Hard, model.horizon < bound)
                    .value(model.horizon)
                    .bound(bound)
                    .detail(format!("T < T_max; {floor}"))
            }
            Err(e) => Check::skipped(NAME, Severity::Hard, e.to_string()),
        },
        _ => Check::skipped(
            NAME,
            Severity::Hard,
            "no closed-form horizon bound with m0 != 0 and m1 != 0; see second_order_condition",
        ),
    }
}
