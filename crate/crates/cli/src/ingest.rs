//! Long-format CSV ingestion for balanced panels.
//!
//! Expected shape: one row per (individual, period) with an id column, a
//! time column, the response column and any number of numeric covariate
//! columns. Rows are sorted by (id, time) — numerically when every key
//! parses as an integer, lexicographically otherwise — and the panel must
//! be balanced: every id observed at exactly the same set of times.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use felasso::estimators::{standardize_covariates, Standardization, StandardizeTarget};
use felasso::panel::PanelDataset;

use crate::error::{CliError, CliResult};

/// Ingestion controls: which columns play which role and whether the
/// covariates are rescaled to a common norm.
#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub id_col: String,
    pub time_col: String,
    pub y_col: String,
    pub standardize: bool,
    pub target: StandardizeTarget,
}

/// The ingested panel plus everything needed to report in the file's own
/// vocabulary: column names, id labels in panel order, time labels.
#[derive(Debug, Clone)]
pub struct IngestedPanel {
    pub data: PanelDataset,
    pub standardization: Option<Standardization>,
    pub covariate_names: Vec<String>,
    pub ids: Vec<String>,
    pub times: Vec<String>,
}

impl IngestedPanel {
    /// Human-readable label for a design column: covariate name or
    /// `dummy:<id>` for the individual-effect block.
    pub fn column_label(&self, j: usize) -> String {
        if j < self.covariate_names.len() {
            self.covariate_names[j].clone()
        } else {
            format!("dummy:{}", self.ids[j - self.covariate_names.len()])
        }
    }
}

/// A key that sorts numerically when it can, lexicographically otherwise.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum SortKey {
    Int(i64),
    Text(String),
}

fn sort_keys(raw: &[String]) -> Vec<SortKey> {
    let all_int = raw.iter().all(|s| s.trim().parse::<i64>().is_ok());
    raw.iter()
        .map(|s| {
            if all_int {
                SortKey::Int(s.trim().parse().unwrap())
            } else {
                SortKey::Text(s.clone())
            }
        })
        .collect()
}

pub fn ingest_csv(path: &Path, opts: &IngestOptions) -> CliResult<IngestedPanel> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();

    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::input(format!("column '{name}' not found in header")))
    };
    let id_idx = find(&opts.id_col)?;
    let time_idx = find(&opts.time_col)?;
    let y_idx = find(&opts.y_col)?;
    if id_idx == time_idx || id_idx == y_idx || time_idx == y_idx {
        return Err(CliError::input("id, time and response columns must be distinct"));
    }

    let covariate_cols: Vec<usize> =
        (0..headers.len()).filter(|&j| j != id_idx && j != time_idx && j != y_idx).collect();
    let covariate_names: Vec<String> =
        covariate_cols.iter().map(|&j| headers[j].clone()).collect();

    struct Row {
        id: String,
        time: String,
        y: f64,
        x: Vec<f64>,
    }
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let cell = |j: usize| record.get(j).unwrap_or("").trim().to_string();
        let parse = |j: usize| -> CliResult<f64> {
            let raw = cell(j);
            if raw.is_empty() {
                return Err(CliError::input(format!(
                    "missing value in column '{}' at data row {}",
                    headers[j],
                    line + 1
                )));
            }
            raw.parse::<f64>().map_err(|_| {
                CliError::input(format!(
                    "non-numeric value '{raw}' in column '{}' at data row {}",
                    headers[j],
                    line + 1
                ))
            })
        };
        let y = parse(y_idx)?;
        if !y.is_finite() {
            return Err(CliError::input(format!("non-finite response at data row {}", line + 1)));
        }
        let mut x = Vec::with_capacity(covariate_cols.len());
        for &j in &covariate_cols {
            let v = parse(j)?;
            if !v.is_finite() {
                return Err(CliError::input(format!(
                    "non-finite covariate '{}' at data row {}",
                    headers[j],
                    line + 1
                )));
            }
            x.push(v);
        }
        rows.push(Row { id: cell(id_idx), time: cell(time_idx), y, x });
    }
    if rows.is_empty() {
        return Err(CliError::input("the file contains no data rows"));
    }

    // group by id, collect the time axis, validate balance
    let id_keys = sort_keys(&rows.iter().map(|r| r.id.clone()).collect::<Vec<_>>());
    let time_keys = sort_keys(&rows.iter().map(|r| r.time.clone()).collect::<Vec<_>>());
    let mut by_id: BTreeMap<SortKey, BTreeMap<SortKey, usize>> = BTreeMap::new();
    for (r, row) in rows.iter().enumerate() {
        let slot = by_id.entry(id_keys[r].clone()).or_default();
        if slot.insert(time_keys[r].clone(), r).is_some() {
            return Err(CliError::input(format!(
                "duplicate observation for id '{}' at time '{}'",
                row.id, row.time
            )));
        }
    }

    let reference: Vec<SortKey> = by_id.values().next().unwrap().keys().cloned().collect();
    for (id, times) in &by_id {
        let got: Vec<SortKey> = times.keys().cloned().collect();
        if got != reference {
            let label = match id {
                SortKey::Int(v) => v.to_string(),
                SortKey::Text(s) => s.clone(),
            };
            return Err(CliError::input(format!(
                "unbalanced panel: id '{label}' has {} observation(s), expected {}",
                got.len(),
                reference.len()
            )));
        }
    }

    let n = by_id.len();
    let t = reference.len();
    let p = covariate_names.len();
    let mut y = DVector::zeros(n * t);
    let mut x = DMatrix::zeros(n * t, p);
    let mut ids = Vec::with_capacity(n);
    for (i, (_, times)) in by_id.iter().enumerate() {
        let mut first = true;
        for (s, (_, &r)) in times.iter().enumerate() {
            if first {
                ids.push(rows[r].id.clone());
                first = false;
            }
            let out_row = i * t + s;
            y[out_row] = rows[r].y;
            for (j, v) in rows[r].x.iter().enumerate() {
                x[(out_row, j)] = *v;
            }
        }
    }
    let times: Vec<String> = {
        let sample = by_id.values().next().unwrap();
        sample.values().map(|&r| rows[r].time.clone()).collect()
    };

    let raw = PanelDataset::new(n, t, y, x).map_err(CliError::from)?;
    let (data, standardization) = if opts.standardize {
        let (scaled, s) = standardize_covariates(&raw, opts.target)?;
        (scaled, Some(s))
    } else {
        (raw, None)
    };

    Ok(IngestedPanel { data, standardization, covariate_names, ids, times })
}

/// Emits a panel in the long format accepted by [`ingest_csv`], with
/// shortest round-trip float formatting so a re-ingestion is bit-exact.
pub fn write_panel_csv<W: Write>(
    out: &mut W,
    data: &PanelDataset,
    covariate_names: &[String],
    ids: &[String],
    times: &[String],
) -> CliResult<()> {
    if covariate_names.len() != data.n_covariates()
        || ids.len() != data.n_individuals()
        || times.len() != data.n_periods()
    {
        return Err(CliError::input("label counts do not match the panel dimensions"));
    }
    let mut header = vec!["id".to_string(), "time".to_string(), "y".to_string()];
    header.extend(covariate_names.iter().cloned());
    writeln!(out, "{}", header.join(","))?;
    for (i, id) in ids.iter().enumerate() {
        for (s, time) in times.iter().enumerate() {
            let r = data.row(i, s);
            let mut cells = vec![id.clone(), time.clone(), format!("{}", data.y()[r])];
            for j in 0..data.n_covariates() {
                cells.push(format!("{}", data.x()[(r, j)]));
            }
            writeln!(out, "{}", cells.join(","))?;
        }
    }
    Ok(())
}
