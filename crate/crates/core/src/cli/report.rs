use serde::Serialize;

use crate::calibration::Method;
use crate::simulation::ReplicationSummary;

/// JSON Schema for both report kinds.
pub const REPORT_SCHEMA: &str = include_str!("../../schemas/report.json");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientRow {
    /// Column name, or `(intercept)`.
    pub name: String,
    /// `intercept`, `exposure` or `confounder`.
    pub role: &'static str,
    /// Multiplier applied to estimate, SE and interval (1 unless configured).
    pub units: f64,
    pub estimate: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodReport {
    pub method: Method,
    pub coefficients: Vec<CoefficientRow>,
    pub warnings: Vec<String>,
    /// Set when the estimator failed; `coefficients` is then empty.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub kind: &'static str,
    pub version: &'static str,
    pub ci_level: f64,
    pub n_main: usize,
    pub n_validation: usize,
    pub rows_dropped_main: usize,
    pub rows_dropped_validation: usize,
    pub methods: Vec<MethodReport>,
}

impl AnalysisReport {
    pub fn method(&self, method: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.method == method)
    }

    pub fn render_table(&self) -> String {
        let mut out = format!(
            "n_M = {} ({} incomplete rows dropped), n_V = {} ({} dropped), {:.0}% intervals\n",
            self.n_main,
            self.rows_dropped_main,
            self.n_validation,
            self.rows_dropped_validation,
            self.ci_level * 100.0
        );
        out.push_str(&format!(
            "{:<17} {:<14} {:>8} {:>11} {:>10} {:>24} {:>10}\n",
            "Method", "Coef", "Units", "Estimate", "SE", "CI", "p"
        ));
        for m in &self.methods {
            if let Some(e) = &m.error {
                out.push_str(&format!("{:<17} failed: {e}\n", m.method.as_str()));
                continue;
            }
            for c in &m.coefficients {
                out.push_str(&format!(
                    "{:<17} {:<14} {:>8} {:>11.4} {:>10.4} {:>24} {:>10.3e}\n",
                    m.method.as_str(),
                    c.name,
                    c.units,
                    c.estimate,
                    c.se,
                    format!("({:.4}, {:.4})", c.lower, c.upper),
                    c.p_value
                ));
            }
            for w in &m.warnings {
                out.push_str(&format!("{:<17} warning: {w}\n", m.method.as_str()));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub kind: &'static str,
    pub version: &'static str,
    #[serde(flatten)]
    pub summary: ReplicationSummary,
}

impl SimulationReport {
    pub fn new(summary: ReplicationSummary) -> Self {
        Self {
            kind: "simulation",
            version: env!("CARGO_PKG_VERSION"),
            summary,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn render_table(&self) -> String {
        self.summary.render_table()
    }
}
