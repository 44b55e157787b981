//! Flat key–value config files (TOML syntax, top-level keys only).
//!
//! See `configs/` for annotated examples of both kinds.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::linalg::{Matrix, Vector};
use crate::simulation::{ErrorDistribution, MeLevel, ScenarioSpec, Transport};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Table,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodChoice {
    Naive,
    OriginalRc,
    TransportableRc,
    #[default]
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioPreset {
    /// One exposure, one confounder.
    #[default]
    Scalar,
    /// Four correlated exposures, one confounder.
    FourExposure,
}

fn default_level() -> f64 {
    0.95
}

/// `trc analyze` input.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub main_csv: PathBuf,
    pub validation_csv: PathBuf,
    pub outcome: String,
    /// Surrogate columns `Z`, present in both files.
    pub surrogates: Vec<String>,
    /// Confounder columns `W`, present in both files.
    #[serde(default)]
    pub confounders: Vec<String>,
    /// True-exposure columns `X` in the validation file, aligned with `surrogates`.
    pub exposures: Vec<String>,
    #[serde(default)]
    pub method: MethodChoice,
    #[serde(default = "default_level")]
    pub ci_level: f64,
    #[serde(default)]
    pub format: OutputFormat,
    /// Per-exposure multipliers applied to reported effects, e.g. 500 to
    /// report "per 500 kcal" when the exposure is in kcal.
    #[serde(default)]
    pub units: Option<Vec<f64>>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl AnalysisConfig {
    /// Parses a config; relative CSV paths are resolved against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let mut cfg: Self = parse_file(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.main_csv = base.join(&cfg.main_csv);
        cfg.validation_csv = base.join(&cfg.validation_csv);
        Ok(cfg)
    }

    pub fn p(&self) -> usize {
        self.surrogates.len()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.surrogates.is_empty() {
            return Err(CliError::Config("at least one surrogate column is required".into()));
        }
        if self.surrogates.len() != self.exposures.len() {
            return Err(CliError::Config(format!(
                "{} surrogates but {} true exposures",
                self.surrogates.len(),
                self.exposures.len()
            )));
        }
        let mut seen = HashSet::new();
        let all = std::iter::once(&self.outcome)
            .chain(&self.surrogates)
            .chain(&self.confounders)
            .chain(&self.exposures);
        for name in all {
            if !seen.insert(name.as_str()) {
                return Err(CliError::Config(format!("column `{name}` is assigned more than one role")));
            }
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::InvalidLevel(self.ci_level).into());
        }
        if let Some(units) = &self.units {
            if units.len() != self.p() {
                return Err(CliError::Config(format!(
                    "units has {} entries, expected one per exposure ({})",
                    units.len(),
                    self.p()
                )));
            }
            if units.iter().any(|u| !u.is_finite() || *u == 0.0) {
                return Err(CliError::Config("units must be finite and non-zero".into()));
            }
        }
        Ok(())
    }
}

/// `trc simulate` input. Every scenario field is optional and falls back to
/// the chosen preset's default.
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default)]
    pub preset: ScenarioPreset,
    pub transport: Option<Transport>,
    pub me_level: Option<MeLevel>,
    pub error_distribution: Option<ErrorDistribution>,
    pub n_main: Option<usize>,
    pub n_validation: Option<usize>,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    /// Worker threads; 0 or absent means all available cores.
    pub threads: Option<usize>,
    pub ci_level: Option<f64>,
    pub format: Option<OutputFormat>,
    pub output: Option<PathBuf>,

    pub beta0: Option<f64>,
    pub beta1: Option<Vec<f64>>,
    pub beta2: Option<Vec<f64>>,
    pub a0: Option<Vec<f64>>,
    /// `q` rows of length `p`.
    pub a2: Option<Vec<Vec<f64>>>,
    pub sigma_x: Option<Vec<Vec<f64>>>,
    pub c0: Option<Vec<f64>>,
    pub c1: Option<Vec<Vec<f64>>>,
    /// `q` rows of length `p`.
    pub c2: Option<Vec<Vec<f64>>>,
    pub sigma_e: Option<Vec<Vec<f64>>>,
    pub sigma_y: Option<f64>,
}

pub const DEFAULT_REPLICATIONS: usize = 1000;
pub const DEFAULT_SEED: u64 = 20_240_601;

impl SimulationConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        parse_file(path)
    }

    pub fn replications(&self) -> usize {
        self.replications.unwrap_or(DEFAULT_REPLICATIONS)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn ci_level(&self) -> f64 {
        self.ci_level.unwrap_or(0.95)
    }

    pub fn threads(&self) -> usize {
        match self.threads {
            Some(n) if n > 0 => n,
            _ => std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }

    /// Preset defaults with every given field substituted, validated.
    pub fn scenario(&self) -> Result<ScenarioSpec, Error> {
        let transport = self.transport.unwrap_or(Transport::S1);
        let me = self.me_level.unwrap_or(MeLevel::Small);
        let mut spec = match self.preset {
            ScenarioPreset::Scalar => ScenarioSpec::scalar(transport, me),
            ScenarioPreset::FourExposure => ScenarioSpec::four_exposure(transport, me),
        };
        if let Some(d) = self.error_distribution {
            spec.exposure_error = d;
        }
        if let Some(n) = self.n_main {
            spec.n_main = n;
        }
        if let Some(n) = self.n_validation {
            spec.n_validation = n;
        }
        if let Some(b) = self.beta0 {
            spec.beta0 = b;
        }
        if let Some(s) = self.sigma_y {
            spec.sigma_y = s;
        }
        let vectors = [
            ("beta1", &self.beta1, &mut spec.beta1),
            ("beta2", &self.beta2, &mut spec.beta2),
            ("a0", &self.a0, &mut spec.a0),
            ("c0", &self.c0, &mut spec.c0),
        ];
        for (_, src, dst) in vectors {
            if let Some(v) = src {
                *dst = Vector::from_column_slice(v);
            }
        }
        let matrices = [
            ("a2", &self.a2, &mut spec.a2),
            ("sigma_x", &self.sigma_x, &mut spec.sigma_x),
            ("c1", &self.c1, &mut spec.c1),
            ("c2", &self.c2, &mut spec.c2),
            ("sigma_e", &self.sigma_e, &mut spec.sigma_e),
        ];
        for (field, src, dst) in matrices {
            if let Some(rows) = src {
                *dst = rows_to_matrix(field, rows)?;
            }
        }
        if self.replications == Some(0) {
            return Err(Error::invalid_spec("replications", "must be at least 1"));
        }
        if let Some(level) = self.ci_level {
            if !(level > 0.0 && level < 1.0) {
                return Err(Error::InvalidLevel(level));
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn rows_to_matrix(field: &str, rows: &[Vec<f64>]) -> Result<Matrix, Error> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::invalid_spec(field, "rows have different lengths"));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Matrix::from_row_slice(rows.len(), ncols, &flat))
}

fn parse_file<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text).map_err(|e| {
        let row = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        CliError::Parse {
            path: path.to_path_buf(),
            row,
            column: None,
            message: e.message().to_string(),
        }
    })
}
