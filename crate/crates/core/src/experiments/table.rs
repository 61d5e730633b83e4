use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::datasets::LabelArity;
use crate::evaluation::EvalReport;

/// One score in a results table, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub row: String,
    pub column: String,
    pub value: f64,
    pub arity: LabelArity,
}

impl TableCell {
    pub fn new(row: impl Into<String>, column: impl Into<String>, value: f64, arity: LabelArity) -> Self {
        Self { row: row.into(), column: column.into(), value, arity }
    }

    pub fn from_report(row: impl Into<String>, column: impl Into<String>, report: &EvalReport) -> Self {
        Self::new(row, column, report.f_avg * 100.0, report.arity)
    }

    pub fn transposed(self) -> Self {
        Self { row: self.column, column: self.row, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AvgPlacement {
    /// Extra column holding each row's mean.
    #[default]
    Column,
    /// Extra row holding each column's mean.
    Row,
    None,
}

pub const AVG_LABEL: &str = "Avg.";

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub corner: String,
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<Option<f64>>)>,
}

/// Rounds to one decimal, halves away from zero. Published scores are
/// given to one decimal, so means like 84.35 must round up even though the
/// nearest double sits just below.
pub fn round1(x: f64) -> f64 {
    let scaled = x * 10.0;
    (scaled + 1e-6f64.copysign(scaled)).round() / 10.0
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Arranges cells into a grid in first-seen order and appends the
/// unweighted mean per row or per column. Means use full precision;
/// rounding happens only on display.
pub fn emit_table(cells: &[TableCell], corner: &str, avg: AvgPlacement) -> Result<Table, ExperimentError> {
    let Some(first) = cells.first() else {
        return Err(ExperimentError::InconsistentReports("no cells".into()));
    };
    if let Some(c) = cells.iter().find(|c| c.arity != first.arity) {
        return Err(ExperimentError::InconsistentReports(format!(
            "cell ({}, {}) has {} labels, others {}",
            c.row,
            c.column,
            c.arity.count(),
            first.arity.count()
        )));
    }
    if let Some(c) = cells.iter().find(|c| !c.value.is_finite()) {
        return Err(ExperimentError::InconsistentReports(format!("cell ({}, {}) is not finite", c.row, c.column)));
    }
    let mut rows: Vec<String> = Vec::new();
    let mut columns: Vec<String> = Vec::new();
    let mut values: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for c in cells {
        let r = rows.iter().position(|x| *x == c.row).unwrap_or_else(|| {
            rows.push(c.row.clone());
            rows.len() - 1
        });
        let k = columns.iter().position(|x| *x == c.column).unwrap_or_else(|| {
            columns.push(c.column.clone());
            columns.len() - 1
        });
        if values.insert((r, k), c.value).is_some() {
            return Err(ExperimentError::InconsistentReports(format!("two cells for ({}, {})", c.row, c.column)));
        }
    }
    let mut grid: Vec<(String, Vec<Option<f64>>)> = rows
        .iter()
        .enumerate()
        .map(|(r, name)| (name.clone(), (0..columns.len()).map(|k| values.get(&(r, k)).copied()).collect()))
        .collect();
    match avg {
        AvgPlacement::Column => {
            for (_, row) in grid.iter_mut() {
                let m = mean(row.iter().flatten().copied());
                row.push(m);
            }
            columns.push(AVG_LABEL.to_string());
        }
        AvgPlacement::Row => {
            let means = (0..columns.len()).map(|k| mean(grid.iter().filter_map(|(_, r)| r[k]))).collect();
            grid.push((AVG_LABEL.to_string(), means));
        }
        AvgPlacement::None => {}
    }
    Ok(Table { corner: corner.to_string(), columns, rows: grid })
}

impl Table {
    pub fn get(&self, row: &str, column: &str) -> Option<f64> {
        let k = self.columns.iter().position(|c| c == column)?;
        self.rows.iter().find(|(r, _)| r == row).and_then(|(_, v)| v[k])
    }

    /// Value as displayed, rounded to one decimal.
    pub fn displayed(&self, row: &str, column: &str) -> Option<f64> {
        self.get(row, column).map(round1)
    }
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let first = self.rows.iter().map(|(r, _)| r.len()).chain([self.corner.len()]).max().unwrap_or(0);
        let widths: Vec<usize> = self.columns.iter().map(|c| c.len().max(5)).collect();
        write!(f, "{:<first$}", self.corner)?;
        for (c, w) in self.columns.iter().zip(&widths) {
            write!(f, "  {c:>w$}")?;
        }
        writeln!(f)?;
        for (name, vals) in &self.rows {
            write!(f, "{name:<first$}")?;
            for (v, w) in vals.iter().zip(&widths) {
                match v {
                    Some(v) => write!(f, "  {:>w$.1}", round1(*v))?,
                    None => write!(f, "  {:>w$}", "-")?,
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(name: &str, cols: &[&str], vals: &[f64]) -> Vec<TableCell> {
        cols.iter().zip(vals).map(|(c, v)| TableCell::new(name, *c, *v, LabelArity::Two)).collect()
    }

    #[test]
    fn single_cell() {
        let t = emit_table(&row("m", &["a"], &[71.25]), "Method", AvgPlacement::Column).unwrap();
        assert_eq!(t.get("m", AVG_LABEL), Some(71.25));
    }

    #[test]
    fn rounding_goes_half_up() {
        assert_eq!(round1(84.35), 84.4);
        assert_eq!(round1(82.76666), 82.8);
        assert_eq!(round1(68.3), 68.3);
        assert_eq!(round1(-0.25), -0.3);
    }

    #[test]
    fn mixed_arity_is_rejected() {
        let mut cells = row("m", &["a"], &[1.0]);
        cells.push(TableCell::new("m", "b", 2.0, LabelArity::Three));
        assert!(matches!(emit_table(&cells, "", AvgPlacement::Column), Err(ExperimentError::InconsistentReports(_))));
    }

    #[test]
    fn duplicate_cell_is_rejected() {
        let cells = row("m", &["a", "a"], &[1.0, 2.0]);
        assert!(emit_table(&cells, "", AvgPlacement::None).is_err());
    }

    #[test]
    fn average_row_and_missing_cells() {
        let mut cells = row("x", &["m1", "m2"], &[10.0, 20.0]);
        cells.extend(row("y", &["m1"], &[30.0]));
        let t = emit_table(&cells, "Target", AvgPlacement::Row).unwrap();
        assert_eq!(t.get(AVG_LABEL, "m1"), Some(20.0));
        assert_eq!(t.get(AVG_LABEL, "m2"), Some(20.0));
        assert!(t.to_string().contains('-'));
    }
}
