use std::fmt::Write as _;

use super::{Prf, Scores};
use crate::corpus::Label;

/// One system's scores under each column group.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub system: String,
    pub cells: Vec<Scores>,
}

impl TableRow {
    /// Scores of `labels` from `prf`, followed by the weighted total when
    /// `total` is set. Labels absent from `prf` give zeros.
    pub fn from_prf(system: impl Into<String>, prf: &Prf, labels: &[Label], total: bool) -> Self {
        let zero = Scores {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
        };
        let mut cells: Vec<Scores> = labels.iter().map(|&l| *prf.class(l).unwrap_or(&zero)).collect();
        if total {
            cells.push(prf.weighted);
        }
        TableRow {
            system: system.into(),
            cells,
        }
    }
}

/// Precision/recall/F1 groups (one per column) for several systems.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
}

impl Table {
    pub fn new(title: impl Into<String>, columns: &[&str]) -> Self {
        Table {
            title: title.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: TableRow) {
        self.rows.push(row);
    }
}

/// Tab-separated: a header line, then one line per system with six
/// decimals per number.
pub fn render_tsv(table: &Table) -> String {
    let mut out = String::from("system");
    for c in &table.columns {
        for m in ["precision", "recall", "f1"] {
            let _ = write!(out, "\t{c}_{m}");
        }
    }
    out.push('\n');
    for row in &table.rows {
        out.push_str(&row.system);
        for s in &row.cells {
            let _ = write!(out, "\t{:.6}\t{:.6}\t{:.6}", s.precision, s.recall, s.f1);
        }
        out.push('\n');
    }
    out
}

fn three(v: f64) -> String {
    let s = format!("{v:.3}");
    s.strip_prefix('0').map(String::from).unwrap_or(s)
}

/// Aligned plain text with three-decimal scores.
pub fn render_text(table: &Table) -> String {
    let name_w = table
        .rows
        .iter()
        .map(|r| r.system.len())
        .chain(["System".len()])
        .max()
        .unwrap_or(6);
    let group_w = 20;
    let mut out = format!("{}\n", table.title);
    let _ = write!(out, "{:<name_w$}", "");
    for c in &table.columns {
        let _ = write!(out, " | {c:^group_w$}");
    }
    out.push('\n');
    let _ = write!(out, "{:<name_w$}", "System");
    for _ in &table.columns {
        let _ = write!(out, " | {:>6}{:>7}{:>7}", "Prec.", "Rec.", "F1");
    }
    out.push('\n');
    let width = name_w + table.columns.len() * (group_w + 3);
    out.push_str(&"-".repeat(width));
    out.push('\n');
    for row in &table.rows {
        let _ = write!(out, "{:<name_w$}", row.system);
        for s in &row.cells {
            let _ = write!(
                out,
                " | {:>6}{:>7}{:>7}",
                three(s.precision),
                three(s.recall),
                three(s.f1)
            );
        }
        out.push('\n');
    }
    out
}
