//! CSV dialect: comma separated, header row, `.` decimals. An empty field in
//! any used column drops the whole row (complete-case analysis).

use std::path::{Path, PathBuf};

use super::{AnalysisConfig, CliError};
use crate::calibration::{MainStudyData, ValidationStudyData};
use crate::linalg::{Matrix, Vector};

/// Selected numeric columns of a CSV file, in request order.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub path: PathBuf,
    pub names: Vec<String>,
    /// `n × names.len()`
    pub data: Matrix,
    /// Rows skipped because a used field was empty.
    pub dropped: usize,
}

impl Table {
    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    fn block(&self, start: usize, len: usize) -> Matrix {
        self.data.columns(start, len).into_owned()
    }
}

/// Reads the columns named in `columns`, each tagged with its role for
/// error messages.
pub fn read_table(path: &Path, columns: &[(&str, &str)]) -> Result<Table, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let csv_err = |e: csv::Error| {
        let row = e.position().map(|p| p.line() as usize);
        match e.kind() {
            csv::ErrorKind::Io(_) => CliError::Io {
                path: path.to_path_buf(),
                message: e.to_string(),
            },
            _ => CliError::Parse {
                path: path.to_path_buf(),
                row,
                column: None,
                message: e.to_string(),
            },
        }
    };
    let headers = reader.headers().map_err(csv_err)?.clone();
    let mut index = Vec::with_capacity(columns.len());
    for &(role, name) in columns {
        let i = headers.iter().position(|h| h.trim() == name).ok_or_else(|| CliError::MissingColumn {
            path: path.to_path_buf(),
            role: role.to_string(),
            name: name.to_string(),
        })?;
        index.push(i);
    }

    let k = columns.len();
    let mut values = Vec::new();
    let mut dropped = 0;
    let mut row = vec![0.0; k];
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let mut complete = true;
        for (slot, (&i, &(_, name))) in index.iter().zip(columns).enumerate() {
            let field = record.get(i).unwrap_or("").trim();
            if field.is_empty() {
                complete = false;
                break;
            }
            let v: f64 = field.parse().map_err(|_| CliError::Parse {
                path: path.to_path_buf(),
                row: Some(line),
                column: Some(name.to_string()),
                message: format!("`{field}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(CliError::Parse {
                    path: path.to_path_buf(),
                    row: Some(line),
                    column: Some(name.to_string()),
                    message: format!("`{field}` is not finite"),
                });
            }
            row[slot] = v;
        }
        if complete {
            values.extend_from_slice(&row);
        } else {
            dropped += 1;
        }
    }
    let n = values.len() / k.max(1);
    Ok(Table {
        path: path.to_path_buf(),
        names: columns.iter().map(|c| c.1.to_string()).collect(),
        data: Matrix::from_row_slice(n, k, &values),
        dropped,
    })
}

fn roles<'a>(role: &'a str, names: &'a [String]) -> impl Iterator<Item = (&'a str, &'a str)> {
    names.iter().map(move |n| (role, n.as_str()))
}

pub fn load_main_study(cfg: &AnalysisConfig) -> Result<(MainStudyData, usize), CliError> {
    let cols: Vec<(&str, &str)> = std::iter::once(("outcome", cfg.outcome.as_str()))
        .chain(roles("surrogate", &cfg.surrogates))
        .chain(roles("confounder", &cfg.confounders))
        .collect();
    let t = read_table(&cfg.main_csv, &cols)?;
    let (p, q) = (cfg.surrogates.len(), cfg.confounders.len());
    let y = Vector::from_column_slice(t.data.column(0).as_slice());
    let data = MainStudyData::new(y, t.block(1, p), t.block(1 + p, q))?;
    Ok((data, t.dropped))
}

pub fn load_validation_study(cfg: &AnalysisConfig) -> Result<(ValidationStudyData, usize), CliError> {
    let cols: Vec<(&str, &str)> = roles("true exposure", &cfg.exposures)
        .chain(roles("surrogate", &cfg.surrogates))
        .chain(roles("confounder", &cfg.confounders))
        .collect();
    let t = read_table(&cfg.validation_csv, &cols)?;
    let (p, q) = (cfg.surrogates.len(), cfg.confounders.len());
    let data = ValidationStudyData::new(t.block(0, p), t.block(p, p), t.block(2 * p, q))?;
    Ok((data, t.dropped))
}

/// 17 significant digits: every `f64` survives a write/read round trip.
fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_rows(path: &Path, header: Vec<String>, blocks: &[&Matrix]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let io = |e: csv::Error| CliError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    w.write_record(&header).map_err(io)?;
    let n = blocks.first().map_or(0, |b| b.nrows());
    for i in 0..n {
        let rec: Vec<String> = blocks.iter().flat_map(|b| b.row(i).iter().map(|&v| fmt(v)).collect::<Vec<_>>()).collect();
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn names(prefix: &str, k: usize) -> impl Iterator<Item = String> + '_ {
    (1..=k).map(move |j| format!("{prefix}{j}"))
}

/// Columns `y, z1..zp, w1..wq`.
pub fn write_main_csv(path: &Path, data: &MainStudyData) -> Result<(), CliError> {
    let header = std::iter::once("y".to_string())
        .chain(names("z", data.p()))
        .chain(names("w", data.q()))
        .collect();
    let y = Matrix::from_column_slice(data.n(), 1, data.y().as_slice());
    write_rows(path, header, &[&y, data.z(), data.w()])
}

/// Columns `x1..xp, z1..zp, w1..wq`.
pub fn write_validation_csv(path: &Path, data: &ValidationStudyData) -> Result<(), CliError> {
    let header = names("x", data.p())
        .chain(names("z", data.p()))
        .chain(names("w", data.q()))
        .collect();
    write_rows(path, header, &[data.x(), data.z(), data.w()])
}
