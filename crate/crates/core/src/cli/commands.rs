use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use super::csvio::{load_main_study, load_validation_study};
use super::report::{AnalysisReport, CoefficientRow, MethodReport, SimulationReport};
use super::{AnalysisConfig, CliError, MethodChoice, OutputFormat, SimulationConfig};
use crate::calibration::{self, CorrectedEstimate, Method};
use crate::simulation::{run_study_at_level, RNG_NAME};
use crate::variance::{confidence_intervals, p_values};

#[derive(Debug, Parser)]
#[command(name = "trc", about = "Transportable regression calibration", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Correct exposure effects in a main study using an external validation study.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        /// Write the report here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<OutputFormat>,
        #[arg(long)]
        ci_level: Option<f64>,
    },
    /// Monte Carlo study of the three estimators.
    Simulate {
        /// Scenario file; without one the scalar S1/small defaults are used.
        #[arg(long)]
        config: Option<PathBuf>,
        /// JSON report destination (the table still goes to stdout).
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<OutputFormat>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        ci_level: Option<f64>,
    },
    /// Print version and random number generator.
    Version,
}

pub fn cmd_version() -> String {
    format!("trc {}\nrng: {RNG_NAME}\n", env!("CARGO_PKG_VERSION"))
}

pub fn cmd_analyze(cfg: &AnalysisConfig) -> Result<AnalysisReport, CliError> {
    cfg.validate()?;
    let (main, dropped_main) = load_main_study(cfg)?;
    let (val, dropped_val) = load_validation_study(cfg)?;

    let methods: &[Method] = match cfg.method {
        MethodChoice::Naive => &[Method::Naive],
        MethodChoice::OriginalRc => &[Method::OriginalRc],
        MethodChoice::TransportableRc => &[Method::TransportableRc],
        MethodChoice::All => &[Method::Naive, Method::OriginalRc, Method::TransportableRc],
    };
    let mut reports = Vec::new();
    let mut first_error = None;
    for &method in methods {
        let est = match method {
            Method::Naive => calibration::naive(&main),
            Method::OriginalRc => calibration::original_rc(&main, &val),
            Method::TransportableRc => calibration::transportable_rc_rosner(&main, &val),
        };
        match est {
            Ok(est) => reports.push(method_report(cfg, &est)?),
            Err(e) => {
                reports.push(MethodReport {
                    method,
                    coefficients: Vec::new(),
                    warnings: Vec::new(),
                    error: Some(e.to_string()),
                });
                first_error.get_or_insert(e);
            }
        }
    }
    if reports.iter().all(|r| r.error.is_some()) {
        if let Some(e) = first_error {
            return Err(e.into());
        }
    }
    Ok(AnalysisReport {
        kind: "analysis",
        version: env!("CARGO_PKG_VERSION"),
        ci_level: cfg.ci_level,
        n_main: main.n(),
        n_validation: val.n(),
        rows_dropped_main: dropped_main,
        rows_dropped_validation: dropped_val,
        methods: reports,
    })
}

fn method_report(cfg: &AnalysisConfig, est: &CorrectedEstimate) -> Result<MethodReport, CliError> {
    let ci = confidence_intervals(est, cfg.ci_level)?;
    let pv = p_values(est)?;
    let p = cfg.p();
    let coefficients = ci
        .iter()
        .enumerate()
        .map(|(i, iv)| {
            let (name, role, units) = if i == 0 {
                ("(intercept)".to_string(), "intercept", 1.0)
            } else if i <= p {
                let u = cfg.units.as_ref().map_or(1.0, |u| u[i - 1]);
                (cfg.exposures[i - 1].clone(), "exposure", u)
            } else {
                (cfg.confounders[i - 1 - p].clone(), "confounder", 1.0)
            };
            // A negative multiplier flips the interval.
            let (a, b) = (iv.lower * units, iv.upper * units);
            CoefficientRow {
                name,
                role,
                units,
                estimate: iv.estimate * units,
                se: iv.se * units.abs(),
                lower: a.min(b),
                upper: a.max(b),
                p_value: pv[i],
            }
        })
        .collect();
    Ok(MethodReport {
        method: est.method,
        coefficients,
        warnings: est.warnings.iter().map(|w| w.to_string()).collect(),
        error: None,
    })
}

/// Runs the study; the caller decides what to do with excess failures
/// (see [`crate::simulation::ReplicationSummary::check_failures`]).
pub fn cmd_simulate(cfg: &SimulationConfig) -> Result<SimulationReport, CliError> {
    let spec = cfg.scenario()?;
    let summary = run_study_at_level(&spec, cfg.replications(), cfg.seed(), cfg.threads(), cfg.ci_level())?;
    Ok(SimulationReport::new(summary))
}

fn write_out(path: &std::path::Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn stdout(text: &str) {
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Version => stdout(&cmd_version()),
        Command::Analyze {
            config,
            output,
            format,
            ci_level,
        } => {
            let mut cfg = AnalysisConfig::load(&config)?;
            if let Some(o) = output {
                cfg.output = Some(o);
            }
            if let Some(f) = format {
                cfg.format = f;
            }
            if let Some(l) = ci_level {
                cfg.ci_level = l;
            }
            let report = cmd_analyze(&cfg)?;
            for (n, which) in [(report.rows_dropped_main, "main"), (report.rows_dropped_validation, "validation")] {
                if n > 0 {
                    eprintln!("warning: {n} incomplete rows dropped from the {which} study");
                }
            }
            let text = match cfg.format {
                OutputFormat::Table => report.render_table(),
                OutputFormat::Json => serde_json::to_string_pretty(&report).expect("report serialises") + "\n",
            };
            match &cfg.output {
                Some(path) => write_out(path, &text)?,
                None => stdout(&text),
            }
        }
        Command::Simulate {
            config,
            output,
            format,
            seed,
            reps,
            threads,
            ci_level,
        } => {
            let mut cfg = match &config {
                Some(path) => SimulationConfig::load(path)?,
                None => SimulationConfig::default(),
            };
            cfg.output = output.or(cfg.output);
            cfg.format = format.or(cfg.format);
            cfg.seed = seed.or(cfg.seed);
            cfg.replications = reps.or(cfg.replications);
            cfg.threads = threads.or(cfg.threads);
            cfg.ci_level = ci_level.or(cfg.ci_level);
            let report = cmd_simulate(&cfg)?;
            let json = report.to_json() + "\n";
            if let Some(path) = &cfg.output {
                write_out(path, &json)?;
            }
            match cfg.format.unwrap_or_default() {
                OutputFormat::Table => stdout(&report.render_table()),
                OutputFormat::Json => stdout(&json),
            }
            report.summary.check_failures()?;
        }
    }
    Ok(())
}

/// Parses `args`, executes, reports errors on stderr and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
