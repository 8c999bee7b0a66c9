//! CSV and JSON files: series, score matrices, per-observation score logs,
//! run metadata, and text tables.
//!
//! Series files have a header row and one numeric column per variable. The
//! first data row is the presample value `y_0`; the remaining rows are
//! `y_1..y_T`. Numbers are written in shortest round-trip form, so a file
//! written here reads back bitwise identically.

use crate::error::{GvpError, Result};
use crate::harness::reports::{CoherenceReport, MergingReport};
use crate::harness::rolling::{EngineKind, ScoreLogRow, ScoreMatrix};
use crate::series::Series;
use serde::Serialize;
use std::fs::File;
use std::io::Write;
use std::path::Path;

/// Which columns of a series file to load.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSelection {
    pub y: String,
    /// Covariate columns; `None` loads every other column.
    pub covariates: Option<Vec<String>>,
}

impl Default for ColumnSelection {
    fn default() -> Self {
        ColumnSelection {
            y: "y".into(),
            covariates: None,
        }
    }
}

fn parse_cell(cell: &str, line: usize, column: &str) -> Result<f64> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Err(GvpError::Parse {
            line,
            message: format!("missing value in column '{column}'"),
        });
    }
    let v: f64 = cell.parse().map_err(|_| GvpError::Parse {
        line,
        message: format!("non-numeric value '{cell}' in column '{column}'"),
    })?;
    if !v.is_finite() {
        return Err(GvpError::Parse {
            line,
            message: format!("non-finite value '{cell}' in column '{column}'"),
        });
    }
    Ok(v)
}

pub fn load_series(path: &Path, selection: &ColumnSelection) -> Result<Series> {
    read_series(File::open(path)?, selection)
}

/// Reads a series from any CSV source. Line numbers in errors are 1-based
/// file lines, the header being line 1.
pub fn read_series<R: std::io::Read>(source: R, selection: &ColumnSelection) -> Result<Series> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(GvpError::Input("empty file: no header row".into()));
    }
    let find = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| {
            GvpError::Input(format!("column '{name}' not found (have {})", header.join(",")))
        })
    };
    let y_col = find(&selection.y)?;
    let cov_names: Vec<String> = match &selection.covariates {
        Some(names) => names.clone(),
        None => header
            .iter()
            .filter(|h| **h != selection.y)
            .cloned()
            .collect(),
    };
    let cov_cols = cov_names.iter().map(|n| find(n)).collect::<Result<Vec<_>>>()?;

    let mut y = Vec::new();
    let mut covariates = vec![Vec::new(); cov_cols.len()];
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != header.len() {
            return Err(GvpError::Parse {
                line,
                message: format!(
                    "ragged row: expected {} fields, found {}",
                    header.len(),
                    record.len()
                ),
            });
        }
        y.push(parse_cell(&record[y_col], line, &selection.y)?);
        for ((col, name), out) in cov_cols.iter().zip(&cov_names).zip(covariates.iter_mut()) {
            out.push(parse_cell(&record[*col], line, name)?);
        }
    }
    if y.is_empty() {
        return Err(GvpError::Input("empty file: no data rows".into()));
    }
    Series::with_covariates(y, cov_names, covariates)
}

pub fn write_series(path: &Path, series: &Series) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["y".to_string()];
    header.extend(series.covariate_names.iter().cloned());
    w.write_record(&header)?;
    for t in 0..series.y.len() {
        let mut row = vec![series.y[t].to_string()];
        row.extend(series.covariates.iter().map(|c| c[t].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Score matrix at full precision; failed cells are empty.
pub fn write_score_matrix(path: &Path, matrix: &ScoreMatrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["update_rule".to_string()];
    header.extend(matrix.eval_labels.iter().cloned());
    w.write_record(&header)?;
    for (label, row) in matrix.update_labels.iter().zip(&matrix.entries) {
        let mut rec = vec![label.clone()];
        rec.extend(row.iter().map(|v| opt_cell(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_score_log(path: &Path, log: &[ScoreLogRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["engine", "update_rule", "n", "eval_rule", "score"])?;
    for row in log {
        w.write_record([
            row.engine.label().to_string(),
            row.update_rule.clone(),
            row.n.to_string(),
            row.eval_rule.clone(),
            opt_cell(row.score),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_score_log(path: &Path) -> Result<Vec<ScoreLogRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let bad = |m: &str| GvpError::Parse {
            line,
            message: m.to_string(),
        };
        if record.len() != 5 {
            return Err(bad("expected 5 fields"));
        }
        let engine = match &record[0] {
            "vb" => EngineKind::Vb,
            "mcmc" => EngineKind::Mcmc,
            other => return Err(bad(&format!("unknown engine '{other}'"))),
        };
        let score = match &record[4] {
            "" => None,
            s => Some(s.parse().map_err(|_| bad("non-numeric score"))?),
        };
        out.push(ScoreLogRow {
            engine,
            update_rule: record[1].to_string(),
            n: record[2].parse().map_err(|_| bad("non-integer n"))?,
            eval_rule: record[3].to_string(),
            score,
        });
    }
    Ok(out)
}

/// `m` draws, one row each, with parameter names as the header.
pub fn write_draws(path: &Path, names: &[String], draws: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(names)?;
    for d in draws {
        w.write_record(d.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

/// `x` with `digits` significant digits.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (digits as i32 - 1 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Plain-text table of a matrix; column maxima are marked with `*`.
pub fn render_matrix(matrix: &ScoreMatrix) -> String {
    let width = 12;
    let mut out = format!("{:<10}", "U.method");
    for l in &matrix.eval_labels {
        out.push_str(&format!("{l:>width$}"));
    }
    out.push('\n');
    let best: Vec<Option<usize>> = (0..matrix.eval_labels.len())
        .map(|j| matrix.column_best(j))
        .collect();
    for (i, (label, row)) in matrix.update_labels.iter().zip(&matrix.entries).enumerate() {
        out.push_str(&format!("{label:<10}"));
        for (j, v) in row.iter().enumerate() {
            let cell = match v {
                Some(x) => {
                    let mark = if best[j] == Some(i) { "*" } else { " " };
                    format!("{}{mark}", format_sig(*x, 6))
                }
                None => "failed ".into(),
            };
            out.push_str(&format!("{cell:>width$}"));
        }
        out.push('\n');
    }
    out
}

pub fn render_coherence(report: &CoherenceReport) -> String {
    let mut out = String::from("column      diagonal_best      margin  best_row\n");
    for c in &report.columns {
        out.push_str(&format!(
            "{:<10}  {:>13}  {:>10}  {}\n",
            c.eval_rule,
            c.diagonal_best,
            format_sig(c.margin, 6),
            c.best_row.as_deref().unwrap_or("-")
        ));
    }
    out.push_str(&format!(
        "diagonal best in {} of {} columns\n",
        report.diagonal_best_count(),
        report.columns.len()
    ));
    out
}

pub fn render_merging(report: &MergingReport) -> String {
    let mut out = format!("{:<10}", "|VB-MCMC|");
    for l in &report.eval_labels {
        out.push_str(&format!("{l:>12}"));
    }
    out.push('\n');
    for (label, row) in report.update_labels.iter().zip(&report.abs_diff) {
        out.push_str(&format!("{label:<10}"));
        for v in row {
            let cell = v.map(|x| format_sig(x, 6)).unwrap_or_else(|| "-".into());
            out.push_str(&format!("{cell:>12}"));
        }
        out.push('\n');
    }
    match report.max_abs_diff {
        Some(m) => out.push_str(&format!("max |VB-MCMC| = {}\n", format_sig(m, 6))),
        None => out.push_str("max |VB-MCMC| = n/a\n"),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str) -> Result<Series> {
        read_series(text.as_bytes(), &ColumnSelection::default())
    }

    #[test]
    fn missing_cell_names_line() {
        let err = read("y,x1\n1.0,2.0\n3.0,\n").unwrap_err();
        match err {
            GvpError::Parse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("missing"));
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn distinct_diagnostics() {
        let ragged = read("y,x1\n1.0,2.0\n3.0\n").unwrap_err().to_string();
        let nan = read("y\n1.0\nNaN\n").unwrap_err().to_string();
        let empty = read("").unwrap_err().to_string();
        assert!(ragged.contains("ragged"));
        assert!(nan.contains("non-finite"));
        assert!(empty.contains("empty"));
    }

    #[test]
    fn column_selection() {
        let text = "x1,y,x2\n1,2,3\n4,5,6\n";
        let s = read_series(
            text.as_bytes(),
            &ColumnSelection {
                y: "y".into(),
                covariates: Some(vec!["x2".into()]),
            },
        )
        .unwrap();
        assert_eq!(s.y, vec![2.0, 5.0]);
        assert_eq!(s.covariates, vec![vec![3.0, 6.0]]);
    }

    #[test]
    fn significant_digits() {
        assert_eq!(format_sig(-0.56334567, 6), "-0.563346");
        assert_eq!(format_sig(-2.3467, 6), "-2.34670");
        assert_eq!(format_sig(123.456789, 6), "123.457");
    }
}
