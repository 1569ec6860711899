//! Method × (regime, topology) tables of density-pooled means.

use std::collections::BTreeSet;

use super::{Aggregate, Arm, Regime, SweepResult};
use crate::graphs::Topology;

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub method: String,
    /// One mean per column; `None` when the cell has no usable rows.
    pub cells: Vec<Option<f64>>,
    /// Failed rows over all cells of this method.
    pub failed: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub title: String,
    /// `(regime, topology)` per column.
    pub columns: Vec<(String, String)>,
    pub rows: Vec<TableRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tables {
    pub selectivity: Table,
    pub alignment: Table,
    pub r2: Table,
}

impl Tables {
    /// File stems paired with their tables.
    pub fn named(&self) -> [(&'static str, &Table); 3] {
        [
            ("selectivity", &self.selectivity),
            ("alignment", &self.alignment),
            ("r2", &self.r2),
        ]
    }
}

fn order_key(regime: &str, topology: &str) -> (Option<Regime>, String, Option<Topology>, String) {
    (
        Regime::parse(regime),
        regime.to_string(),
        Topology::parse(topology),
        topology.to_string(),
    )
}

fn build(result: &SweepResult, title: &str, value: fn(&Aggregate) -> f64) -> Table {
    let columns: BTreeSet<_> = result
        .overall
        .iter()
        .map(|a| order_key(&a.regime, &a.topology))
        .collect();
    let columns: Vec<(String, String)> = columns.into_iter().map(|(_, r, _, t)| (r, t)).collect();
    let methods: BTreeSet<_> = result
        .overall
        .iter()
        .map(|a| (Arm::parse(&a.method), a.method.clone()))
        .collect();
    let rows = methods
        .into_iter()
        .map(|(_, method)| {
            let mine: Vec<&Aggregate> = result.overall.iter().filter(|a| a.method == method).collect();
            let cells = columns
                .iter()
                .map(|(r, t)| {
                    mine.iter()
                        .find(|a| &a.regime == r && &a.topology == t)
                        .map(|a| value(a))
                        .filter(|v| v.is_finite())
                })
                .collect();
            TableRow {
                failed: mine.iter().map(|a| a.failed).sum(),
                total: mine.iter().map(|a| a.total).sum(),
                method,
                cells,
            }
        })
        .collect();
    Table {
        title: title.to_string(),
        columns,
        rows,
    }
}

/// Selectivity, alignment and global R² tables, densities pooled. Failed
/// rows are left out of the means and reported in the attrition column.
pub fn aggregate_tables(result: &SweepResult) -> Tables {
    Tables {
        selectivity: build(result, "Mean out-of-sample selectivity", |a| a.selectivity.mean),
        alignment: build(result, "Mean out-of-sample alignment", |a| a.alignment.mean),
        r2: build(result, "Mean out-of-sample global R2", |a| a.r2_global.mean),
    }
}

impl Table {
    /// `method,<regime>/<topology>...,failed,total`; empty cells have no
    /// usable rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method");
        for (r, t) in &self.columns {
            out.push_str(&format!(",{r}/{t}"));
        }
        out.push_str(",failed,total\n");
        for row in &self.rows {
            out.push_str(&row.method);
            for c in &row.cells {
                out.push(',');
                if let Some(v) = c {
                    out.push_str(&v.to_string());
                }
            }
            out.push_str(&format!(",{},{}\n", row.failed, row.total));
        }
        out
    }

    /// Aligned plain-text rendering with three decimals.
    pub fn to_text(&self) -> String {
        let headers: Vec<String> = self.columns.iter().map(|(r, t)| format!("{r} {t}")).collect();
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|row| {
                let mut cells = vec![row.method.clone()];
                cells.extend(row.cells.iter().map(|c| match c {
                    Some(v) => format!("{v:.3}"),
                    None => "-".to_string(),
                }));
                cells.push(format!("{}/{}", row.failed, row.total));
                cells
            })
            .collect();
        let mut head = vec!["method".to_string()];
        head.extend(headers);
        head.push("failed".to_string());
        let widths: Vec<usize> = (0..head.len())
            .map(|i| {
                body.iter()
                    .map(|r| r[i].chars().count())
                    .chain([head[i].chars().count()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| {
            let parts: Vec<String> = cells
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
            parts.join("  ").trim_end().to_string() + "\n"
        };
        let mut out = format!("{}\n", self.title);
        out.push_str(&line(&head));
        let rule: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
        out.push_str(&"-".repeat(rule));
        out.push('\n');
        for r in &body {
            out.push_str(&line(r));
        }
        out
    }
}
