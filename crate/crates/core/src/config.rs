//! TOML run configuration.
//!
//! Sections are `[run]`, `[model]`, `[penalties]`, `[sim]`, `[schedule]` and
//! `[output]`. Every key is optional and falls back to the baseline
//! one-hour program. `p0`/`p1` are expanded into `m0 = p0 x0 / sqrt(T)` and
//! `m1 = p1 sqrt(T)` at parse time; the normalized form keeps only `m0`/`m1`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{CorrelationTerm, UncertaintyMode};
use crate::params::{ModelParams, PenaltyParams};
use crate::schedule::{ScheduleSpec, WeightSpec};
use crate::sim::{PolicyKind, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyChoice {
    Optimal,
    InfiniteLimit,
    /// Constant rates `x0 / (2T)` for both order types.
    Twap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleChoice {
    Linear,
    Quadratic,
    Tabulated,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSection {
    pub mode: UncertaintyMode,
    pub convention: CorrelationTerm,
    /// Steps of the coefficient grid.
    pub grid: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimSection {
    pub steps: usize,
    pub paths: usize,
    pub seed: u64,
    pub policy: PolicyChoice,
    pub record_every: usize,
    pub execution: Execution,
    /// Number of leading paths written out in full.
    pub export_paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleSection {
    pub kind: ScheduleChoice,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub format: OutputFormat,
}

/// The `p0`/`p1` inputs a config was expanded from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ExpandedInputs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p1: Option<f64>,
}

/// A fully resolved configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub run: RunSection,
    pub model: ModelParams,
    pub penalties: PenaltyParams,
    pub sim: SimSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSection>,
    pub output: OutputSection,
    /// Echo of `p0`/`p1`; dropped by [`RunConfig::normalized`].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expanded_from: Option<ExpandedInputs>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    run: RawRun,
    #[serde(default)]
    model: RawModel,
    #[serde(default)]
    penalties: RawPenalties,
    #[serde(default)]
    sim: RawSim,
    schedule: Option<RawSchedule>,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    mode: Option<UncertaintyMode>,
    convention: Option<CorrelationTerm>,
    grid: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    mu: Option<f64>,
    sigma: Option<f64>,
    gamma: Option<f64>,
    eta0: Option<f64>,
    eta1: Option<f64>,
    eta2: Option<f64>,
    rho: Option<f64>,
    m0: Option<f64>,
    m1: Option<f64>,
    p0: Option<f64>,
    p1: Option<f64>,
    #[serde(rename = "T")]
    horizon: Option<f64>,
    x0: Option<f64>,
    #[serde(rename = "S0")]
    s0: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPenalties {
    alpha: Option<f64>,
    beta: Option<f64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    #[serde(rename = "R1")]
    r1_sq: Option<f64>,
    #[serde(rename = "R2")]
    r2_sq: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    steps: Option<usize>,
    paths: Option<usize>,
    seed: Option<u64>,
    policy: Option<PolicyChoice>,
    record_every: Option<usize>,
    execution: Option<Execution>,
    export_paths: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchedule {
    kind: ScheduleChoice,
    file: Option<PathBuf>,
    weight: Option<f64>,
    weight_file: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    format: Option<OutputFormat>,
}

/// One-based line of `key` inside `[section]`, if it appears.
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let header = format!("[{section}]");
    let mut inside = false;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.starts_with('[') {
            inside = line == header;
            continue;
        }
        if inside {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

struct Ctx<'a> {
    text: &'a str,
}

impl Ctx<'_> {
    fn err(&self, section: &str, key: &str, reason: impl Into<String>) -> Error {
        Error::Config {
            line: locate(self.text, section, key),
            field: Some(format!("{section}.{key}")),
            reason: reason.into(),
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::parse("").expect("empty config resolves to the baseline")
    }
}

impl RunConfig {
    pub fn baseline() -> Self {
        Self::default()
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config {
            line: e.span().map(|s| line_of_offset(text, s.start)),
            field: None,
            reason: e.message().to_string(),
        })?;
        Self::resolve(raw, &Ctx { text })
    }

    fn resolve(raw: RawConfig, ctx: &Ctx<'_>) -> Result<Self> {
        let base = ModelParams::baseline();
        let rm = raw.model;
        let mut model = ModelParams {
            mu: rm.mu.unwrap_or(base.mu),
            sigma: rm.sigma.unwrap_or(base.sigma),
            gamma: rm.gamma.unwrap_or(base.gamma),
            eta0: rm.eta0.unwrap_or(base.eta0),
            eta1: rm.eta1.unwrap_or(base.eta1),
            eta2: rm.eta2.unwrap_or(base.eta2),
            rho: rm.rho.unwrap_or(base.rho),
            m0: rm.m0.unwrap_or(base.m0),
            m1: rm.m1.unwrap_or(base.m1),
            horizon: rm.horizon.unwrap_or(base.horizon),
            x0: rm.x0.unwrap_or(base.x0),
            s0: rm.s0.unwrap_or(base.s0),
        };
        if rm.p0.is_some() && rm.m0.is_some() {
            return Err(ctx.err("model", "p0", "give either m0 or p0, not both"));
        }
        if rm.p1.is_some() && rm.m1.is_some() {
            return Err(ctx.err("model", "p1", "give either m1 or p1, not both"));
        }
        if let Some(p0) = rm.p0 {
            model.m0 = ModelParams::m0_from_p0(p0, model.x0, model.horizon);
        }
        if let Some(p1) = rm.p1 {
            model.m1 = ModelParams::m1_from_p1(p1, model.horizon);
        }
        let expanded_from = (rm.p0.is_some() || rm.p1.is_some()).then_some(ExpandedInputs {
            p0: rm.p0,
            p1: rm.p1,
        });

        let base_pen = PenaltyParams::baseline(&model);
        let rp = raw.penalties;
        let penalties = PenaltyParams {
            alpha: rp.alpha.unwrap_or(base_pen.alpha),
            beta: rp.beta.unwrap_or(base_pen.beta),
            beta1: rp.beta1.unwrap_or(base_pen.beta1),
            beta2: rp.beta2.unwrap_or(base_pen.beta2),
            r1_sq: rp.r1_sq.unwrap_or(base_pen.r1_sq),
            r2_sq: rp.r2_sq.unwrap_or(base_pen.r2_sq),
        };

        let rs = raw.sim;
        let sim = SimSection {
            steps: rs.steps.unwrap_or(3600),
            paths: rs.paths.unwrap_or(1000),
            seed: rs.seed.unwrap_or(1),
            policy: rs.policy.unwrap_or(PolicyChoice::Optimal),
            record_every: rs.record_every.unwrap_or(1),
            execution: rs.execution.unwrap_or_default(),
            export_paths: rs.export_paths.unwrap_or(1),
        };
        for (key, value) in [("steps", sim.steps), ("paths", sim.paths), ("record_every", sim.record_every)] {
            if value == 0 {
                return Err(ctx.err("sim", key, "must be >= 1"));
            }
        }
        if sim.seed > i64::MAX as u64 {
            return Err(ctx.err("sim", "seed", "must fit in a signed 64-bit integer"));
        }

        let run = RunSection {
            mode: raw.run.mode.unwrap_or_else(|| UncertaintyMode::infer(&model)),
            convention: raw.run.convention.unwrap_or_default(),
            grid: raw.run.grid.unwrap_or(sim.steps),
        };
        if run.grid == 0 {
            return Err(ctx.err("run", "grid", "must be >= 1"));
        }
        if let Some(issue) = run.mode.consistency_error(&model) {
            return Err(ctx.err("run", "mode", issue));
        }

        let schedule = match raw.schedule {
            None => None,
            Some(rs) => {
                if rs.kind == ScheduleChoice::Tabulated && rs.file.is_none() {
                    return Err(ctx.err("schedule", "file", "a tabulated schedule needs a file"));
                }
                if rs.kind != ScheduleChoice::Tabulated && rs.file.is_some() {
                    return Err(ctx.err("schedule", "file", "only tabulated schedules read a file"));
                }
                if rs.weight.is_some() && rs.weight_file.is_some() {
                    return Err(ctx.err("schedule", "weight_file", "give either weight or weight_file"));
                }
                if let Some(w) = rs.weight {
                    if !(w.is_finite() && w >= 0.0) {
                        return Err(ctx.err("schedule", "weight", format!("must be finite and >= 0 (got {w})")));
                    }
                }
                Some(ScheduleSection {
                    kind: rs.kind,
                    file: rs.file,
                    weight: rs.weight.or(rs.weight_file.is_none().then_some(0.0)),
                    weight_file: rs.weight_file,
                })
            }
        };

        let output = OutputSection {
            dir: raw.output.dir.unwrap_or_else(|| PathBuf::from("out")),
            format: raw.output.format.unwrap_or_default(),
        };

        Ok(Self {
            run,
            model,
            penalties,
            sim,
            schedule,
            output,
            expanded_from,
        })
    }

    /// The config without the `p0`/`p1` echo.
    pub fn normalized(&self) -> Self {
        Self {
            expanded_from: None,
            ..self.clone()
        }
    }

    /// Normalized TOML; parsing it yields the same config.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(&self.normalized()).map_err(|e| Error::Config {
            line: None,
            field: None,
            reason: e.to_string(),
        })
    }

    /// Builds the schedule and weight. Relative file paths resolve against
    /// `base_dir`.
    pub fn schedule_specs(&self, base_dir: &Path) -> Result<Option<(ScheduleSpec, WeightSpec)>> {
        let Some(section) = &self.schedule else {
            return Ok(None);
        };
        let (x0, horizon) = (self.model.x0, self.model.horizon);
        let spec = match section.kind {
            ScheduleChoice::Linear => ScheduleSpec::linear(x0, horizon)?,
            ScheduleChoice::Quadratic => ScheduleSpec::quadratic(x0, horizon)?,
            ScheduleChoice::Tabulated => {
                let file = section.file.as_ref().expect("checked at parse time");
                ScheduleSpec::from_csv(base_dir.join(file), x0, horizon)?
            }
        };
        let weight = match (&section.weight_file, section.weight) {
            (Some(file), _) => WeightSpec::from_csv(base_dir.join(file))?,
            (None, w) => WeightSpec::constant(w.unwrap_or(0.0))?,
        };
        Ok(Some((spec, weight)))
    }

    pub fn policy_kind(&self) -> PolicyKind {
        match self.sim.policy {
            PolicyChoice::Optimal => PolicyKind::Optimal,
            PolicyChoice::InfiniteLimit => PolicyKind::InfiniteLimit,
            PolicyChoice::Twap => PolicyKind::twap(&self.model),
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig::new(self.sim.steps, self.sim.paths, self.sim.seed)
            .with_policy(self.policy_kind())
            .with_record_every(self.sim.record_every)
            .with_execution(self.sim.execution)
    }

    /// Number of coefficient grid points.
    pub fn grid_points(&self) -> usize {
        self.run.grid + 1
    }
}
