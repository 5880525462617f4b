use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::record::RunRecord;
use crate::error::{Error, Result};
use crate::metrics::MetricReport;
use crate::strategies::Variant;

/// Mean scores over seeds, one row per strategy.
#[derive(Clone, Debug, PartialEq)]
pub struct TableRow {
    pub strategy: Variant,
    pub seeds: usize,
    pub old: MetricReport,
    pub new: MetricReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<TableRow>,
}

fn mean(reports: &[&MetricReport]) -> MetricReport {
    let n = reports.len() as f64;
    MetricReport::from_values(std::array::from_fn(|i| {
        reports.iter().map(|r| r.values()[i]).sum::<f64>() / n
    }))
}

/// Rows in the order F, E_F, D_F, P, FD; cells are means over seeds.
pub fn emit_table(records: &[RunRecord]) -> Result<ResultTable> {
    if records.is_empty() {
        return Err(Error::Validation("no run records to tabulate".into()));
    }
    let mut seen = BTreeSet::new();
    for r in records {
        if !seen.insert((r.strategy, r.seed)) {
            return Err(Error::Validation(format!(
                "strategy {} with seed {} recorded twice",
                r.strategy, r.seed
            )));
        }
    }
    let rows = Variant::ALL
        .into_iter()
        .filter_map(|v| {
            let mut runs: Vec<&RunRecord> = records.iter().filter(|r| r.strategy == v).collect();
            runs.sort_by_key(|r| r.seed);
            (!runs.is_empty()).then(|| TableRow {
                strategy: v,
                seeds: runs.len(),
                old: mean(&runs.iter().map(|r| &r.old).collect::<Vec<_>>()),
                new: mean(&runs.iter().map(|r| &r.new).collect::<Vec<_>>()),
            })
        })
        .collect();
    Ok(ResultTable { rows })
}

impl ResultTable {
    fn header() -> Vec<String> {
        let mut h = vec!["strategy".to_string()];
        for group in ["old", "new"] {
            h.extend(MetricReport::NAMES.iter().map(|m| format!("{group}_{m}")));
        }
        h
    }

    fn cells(row: &TableRow) -> Vec<String> {
        let mut c = vec![row.strategy.label().to_string()];
        c.extend(row.old.values().iter().chain(&row.new.values()).map(|v| format!("{v:.1}")));
        c
    }

    pub fn to_csv(&self) -> String {
        let mut out = Self::header().join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&Self::cells(row).join(","));
            out.push('\n');
        }
        out
    }

    /// Column-aligned rendering with an old/new group line.
    pub fn to_text(&self) -> String {
        let mut lines = vec![Self::header()];
        lines[0] = lines[0]
            .iter()
            .map(|h| h.split_once('_').map_or(h.clone(), |(_, m)| m.to_string()))
            .collect();
        lines.extend(self.rows.iter().map(Self::cells));
        let widths: Vec<usize> = (0..lines[0].len())
            .map(|i| lines.iter().map(|l| l[i].len()).max().unwrap_or(0))
            .collect();
        let span = |cols: std::ops::Range<usize>| cols.clone().map(|i| widths[i]).sum::<usize>() + 2 * (cols.len() - 1);
        let mut out = format!(
            "{:w0$}  {:<w1$}  {}",
            "",
            "old task",
            "new task",
            w0 = widths[0],
            w1 = span(1..6)
        );
        out.push('\n');
        for line in &lines {
            let cells: Vec<String> = line
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    if i == 0 {
                        format!("{c:<w$}", w = widths[i])
                    } else {
                        format!("{c:>w$}", w = widths[i])
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }

    /// Writes `table.csv` and `table.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv = dir.join("table.csv");
        let txt = dir.join("table.txt");
        std::fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        std::fs::write(&txt, self.to_text()).map_err(|e| Error::io(&txt, e))?;
        Ok((csv, txt))
    }
}
