//! Command-line driver: validate, solve, simulate, boundary and suite.
//!
//! Exit codes: 0 success, 1 validity or parse failure, 2 solver abort,
//! 3 I/O error.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use optexec::config::{OutputFormat, RunConfig};
use optexec::model::UncertaintyMode;
use optexec::policy::{buy_sell_boundary, classify_boundary_monotonicity, BoundaryProfile};
use optexec::schedule::{tracking_error, ScheduleSpec, TrackingError, WeightSpec};
use optexec::sim::{simulate_path, MCResult, SimPath};
use optexec::suite::{run_scenario_suite, standard_scenarios};
use optexec::validity::{self, ValidityReport};
use optexec::value::{self, ValueCoefficients};
use optexec::Error;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(name = "optexec", version, about = "Optimal execution with market and limit orders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; omitted keys take baseline values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Coefficient grid steps.
    #[arg(long, global = true)]
    grid: Option<usize>,
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Simulation steps.
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Format of tabular outputs; summaries are always JSON.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Check parameter restrictions and the second-order condition.
    Validate,
    /// Solve for the value-function coefficients.
    Solve,
    /// Simulate the configured policy and estimate the objective.
    Simulate,
    /// Compute the buy-sell boundary (constant uncertainty only).
    Boundary,
    /// Run the standard scenario set.
    Suite,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Format {
    Csv,
    Json,
}

/// Failure classes mapped to exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Failure {
    Invalid = 1,
    Solver = 2,
    Io = 3,
}

fn classify(err: &anyhow::Error) -> Failure {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::SecondOrderBreach { .. }
                | Error::StepUnderflow { .. }
                | Error::NonFinite { .. }
                | Error::NoAdmissibleRoot(_)
                | Error::DegenerateHessian { .. } => Failure::Solver,
                Error::Io { .. } | Error::Csv { .. } | Error::Json(_) => Failure::Io,
                _ => Failure::Invalid,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return Failure::Io;
        }
    }
    Failure::Invalid
}

struct Run {
    config: RunConfig,
    base_dir: PathBuf,
    out: PathBuf,
}

impl Run {
    fn load(cli: &Cli) -> Result<Self> {
        let (mut config, base_dir) = match &cli.config {
            Some(path) => (
                RunConfig::from_file(path)?,
                path.parent().map(Path::to_path_buf).unwrap_or_default(),
            ),
            None => (RunConfig::baseline(), PathBuf::from(".")),
        };
        if let Some(seed) = cli.seed {
            config.sim.seed = seed;
        }
        if let Some(steps) = cli.steps {
            if cli.grid.is_none() && config.run.grid == config.sim.steps {
                config.run.grid = steps;
            }
            config.sim.steps = steps;
        }
        if let Some(grid) = cli.grid {
            config.run.grid = grid;
        }
        if let Some(paths) = cli.paths {
            config.sim.paths = paths;
        }
        if let Some(out) = &cli.out {
            config.output.dir = out.clone();
        }
        if let Some(format) = cli.format {
            config.output.format = match format {
                Format::Csv => OutputFormat::Csv,
                Format::Json => OutputFormat::Json,
            };
        }
        for (name, value) in [
            ("--steps", config.sim.steps),
            ("--grid", config.run.grid),
            ("--paths", config.sim.paths),
        ] {
            if value == 0 {
                bail!(Error::Config {
                    line: None,
                    field: Some(name.into()),
                    reason: "must be >= 1".into(),
                });
            }
        }
        let out = config.output.dir.clone();
        Ok(Self {
            config,
            base_dir,
            out,
        })
    }

    fn schedule(&self) -> Result<Option<(ScheduleSpec, WeightSpec)>> {
        Ok(self.config.schedule_specs(&self.base_dir)?)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn table_name(&self, stem: &str) -> String {
        format!("{stem}.{}", self.config.output.format.extension())
    }

    fn ensure_out(&self) -> Result<()> {
        fs::create_dir_all(&self.out).map_err(|e| io_error(&self.out, e))
    }

    fn header(&self) -> serde_json::Value {
        json!({ "version": VERSION, "config": self.config })
    }

    fn write_json(&self, name: &str, body: serde_json::Value) -> Result<PathBuf> {
        let mut doc = self.header();
        if let (Some(doc), serde_json::Value::Object(body)) = (doc.as_object_mut(), body) {
            doc.extend(body);
        }
        let path = self.path(name);
        let text = serde_json::to_string_pretty(&doc)?;
        fs::write(&path, text + "\n").map_err(|e| io_error(&path, e))?;
        Ok(path)
    }

    fn write_table<T: Serialize>(
        &self,
        stem: &str,
        rows: &T,
        csv: impl FnOnce(&mut BufWriter<File>) -> optexec::Result<()>,
    ) -> Result<PathBuf> {
        let path = self.path(&self.table_name(stem));
        let file = File::create(&path).map_err(|e| io_error(&path, e))?;
        let mut w = BufWriter::new(file);
        match self.config.output.format {
            OutputFormat::Csv => csv(&mut w).map_err(|e| relabel(e, &path))?,
            OutputFormat::Json => {
                serde_json::to_writer_pretty(&mut w, rows)?;
                w.write_all(b"\n").map_err(|e| io_error(&path, e))?;
            }
        }
        w.flush().map_err(|e| io_error(&path, e))?;
        Ok(path)
    }

    fn validity(&self) -> ValidityReport {
        let c = &self.config;
        validity::report(&c.model, &c.penalties, c.run.mode)
    }

    fn solve(&self, report: &mut ValidityReport) -> Result<ValueCoefficients> {
        report.ensure()?;
        let c = &self.config;
        let schedule = self.schedule()?;
        let coeffs = value::solve(
            &c.model,
            &c.penalties,
            c.run.mode,
            c.run.convention,
            schedule.as_ref().map(|(s, w)| (s, w)),
            c.grid_points(),
        )?;
        report.add_second_order(&c.model, &c.penalties, &coeffs.grid, &coeffs.a);
        report.ensure()?;
        Ok(coeffs)
    }
}

fn io_error(path: &Path, source: std::io::Error) -> anyhow::Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
    .into()
}

/// Attaches the real file name to errors raised by writers.
fn relabel(err: Error, path: &Path) -> anyhow::Error {
    let name = path.display().to_string();
    match err {
        Error::Io { source, .. } => Error::Io { path: name, source }.into(),
        Error::Csv { source, .. } => Error::Csv { path: name, source }.into(),
        other => other.into(),
    }
}

fn coefficient_summary(coeffs: &ValueCoefficients, config: &RunConfig) -> serde_json::Value {
    json!({
        "mode": config.run.mode,
        "source": coeffs.source,
        "grid_points": coeffs.len(),
        "a0": coeffs.a[0],
        "b0": coeffs.b[0],
        "c0": coeffs.c[0],
        "initial_value": coeffs.initial_value(),
    })
}

fn cmd_validate(run: &Run) -> Result<()> {
    let mut report = run.validity();
    run.ensure_out()?;
    let solved = if report.passed() {
        Some(run.solve(&mut report))
    } else {
        None
    };
    let path = run.write_json("validity.json", json!({ "validity": report }))?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    eprintln!("wrote {}", path.display());
    match solved {
        Some(Err(e)) => Err(e),
        _ => Ok(report.ensure()?),
    }
}

fn cmd_solve(run: &Run) -> Result<()> {
    let mut report = run.validity();
    let coeffs = run.solve(&mut report)?;
    run.ensure_out()?;
    let rows: Vec<_> = coeffs.rows().collect();
    let table = run.write_table("coefficients", &rows, |w| coeffs.write_csv(w))?;
    let summary = coefficient_summary(&coeffs, &run.config);
    run.write_json(
        "solve.json",
        json!({ "validity": report, "solution": summary }),
    )?;
    println!(
        "V(0, x0) = {:.10e}  a(0) = {:.10e}  b(0) = {:.10e}  c(0) = {:.10e}",
        coeffs.initial_value(),
        coeffs.a[0],
        coeffs.b[0],
        coeffs.c[0]
    );
    eprintln!("wrote {}", table.display());
    Ok(())
}

fn write_paths(run: &Run, prefix: &str, paths: &[SimPath]) -> Result<()> {
    for path in paths {
        let stem = format!("{prefix}path_{:04}", path.path_index);
        run.write_table(&stem, path, |w| path.write_csv(w))?;
    }
    Ok(())
}

fn cmd_simulate(run: &Run) -> Result<()> {
    let mut report = run.validity();
    let coeffs = run.solve(&mut report)?;
    let c = &run.config;
    let sim = c.sim_config();
    let mc = optexec::sim::estimate_objective(&c.model, &c.penalties, &coeffs, &sim)?;
    let export = c.sim.export_paths.min(c.sim.paths);
    let schedule = run.schedule()?;
    // tracking uses every path; only exported paths are kept in memory
    let per_path = sim
        .execution
        .map(if schedule.is_some() { c.sim.paths } else { export }, |i| {
            let path = simulate_path(&c.model, &c.penalties, &coeffs, &sim, i as u64)?;
            let tracking = schedule
                .as_ref()
                .map(|(spec, _)| tracking_error(std::slice::from_ref(&path), spec));
            Ok((tracking, (i < export).then_some(path)))
        })
        .into_iter()
        .collect::<optexec::Result<Vec<_>>>()?;
    let tracking = schedule
        .as_ref()
        .map(|_| TrackingError::merge(per_path.iter().filter_map(|(t, _)| t.as_ref())));
    let paths: Vec<SimPath> = per_path.into_iter().filter_map(|(_, p)| p).collect();
    run.ensure_out()?;
    write_paths(run, "", &paths)?;
    let summary = coefficient_summary(&coeffs, c);
    let path = run.write_json(
        "simulate.json",
        json!({
            "validity": report,
            "solution": summary,
            "mc": mc,
            "tracking": tracking,
        }),
    )?;
    print_mc(&mc, coeffs.initial_value());
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn print_mc(mc: &MCResult, v0: f64) {
    println!(
        "mean objective = {:.6}  stderr = {:.6}  V(0, x0) = {:.6}  mean x_T = {:.4}",
        mc.mean_objective, mc.stderr, v0, mc.mean_final_position
    );
}

fn cmd_boundary(run: &Run) -> Result<()> {
    let c = &run.config;
    if !matches!(c.run.mode, UncertaintyMode::Constant | UncertaintyMode::None) {
        bail!(Error::Precondition(format!(
            "the boundary needs constant fill uncertainty (mode is {:?})",
            c.run.mode
        )));
    }
    validity::report(&c.model, &c.penalties, c.run.mode).ensure()?;
    let n = c.run.grid;
    let grid: Vec<f64> = (0..=n)
        .map(|i| if i == n { c.model.horizon } else { c.model.horizon * i as f64 / n as f64 })
        .collect();
    let profile: BoundaryProfile = buy_sell_boundary(&c.model, &c.penalties, c.run.convention, &grid)?;
    let mono = classify_boundary_monotonicity(&c.model, &c.penalties, c.run.convention, grid.len())?;
    run.ensure_out()?;
    let rows: Vec<_> = profile
        .grid
        .iter()
        .zip(&profile.p)
        .map(|(&t, &p)| json!({ "t": t, "P": p }))
        .collect();
    let table = run.write_table("boundary", &rows, |w| profile.write_csv(w))?;
    run.write_json(
        "boundary.json",
        json!({
            "classification": profile.classification,
            "terminal_target": profile.terminal_target,
            "initial": profile.p[0],
            "relaxed_regime": profile.relaxed_regime,
            "monotonicity": mono,
        }),
    )?;
    println!(
        "P(T) = {:.10}  P(0) = {:.10}  classification = {:?}",
        profile.terminal_target, profile.p[0], profile.classification
    );
    eprintln!("wrote {}", table.display());
    Ok(())
}

fn cmd_suite(run: &Run) -> Result<()> {
    let scenarios = standard_scenarios(&run.config)?;
    let report = run_scenario_suite(&scenarios);
    run.ensure_out()?;
    for scenario in &report.scenarios {
        let dir = run.out.join(&scenario.name);
        fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
        for leg in &scenario.legs {
            let prefix = format!("{}/{}_", scenario.name, leg.label);
            write_paths(run, &prefix, &leg.exported)?;
            let tracking = leg.tracking.as_ref().map(|t| t.mean_square);
            println!(
                "{:<20} {:<14} V0 = {:>14.4}  mean objective = {:>14.4} ± {:<10.4} mean x_T = {:>10.4}{}",
                scenario.name,
                leg.label,
                leg.initial_value,
                leg.mc.mean_objective,
                leg.mc.stderr,
                leg.mc.mean_final_position,
                tracking.map(|m| format!("  tracking ms = {m:.4}")).unwrap_or_default()
            );
        }
        for f in &scenario.failures {
            println!("{:<20} {:<14} FAILED: {}", scenario.name, f.label, f.error);
        }
    }
    run.write_json("suite.json", json!({ "suite": report }))?;
    let failures = report.failure_count();
    if failures > 0 {
        bail!(Error::Validity(vec![format!("{failures} scenario leg(s) failed")]));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(Failure::Invalid as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = Run::load(&cli).and_then(|run| match cli.command {
        Command::Validate => cmd_validate(&run),
        Command::Solve => cmd_solve(&run),
        Command::Simulate => cmd_simulate(&run),
        Command::Boundary => cmd_boundary(&run),
        Command::Suite => cmd_suite(&run),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(classify(&err) as u8)
        }
    }
}
