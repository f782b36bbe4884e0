//! Rendering performance results as Markdown and CSV tables.
//!
//! Markdown output rounds to two decimals for reading; CSV output writes full
//! `f64` precision so downstream recomputation reproduces the numbers
//! exactly.

use super::{AnnualReturn, PerformanceSummary};

/// One labeled portfolio in a comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub label: String,
    pub summary: PerformanceSummary,
}

/// Headline comparison across portfolios, in presentation order.
#[derive(Debug, Clone, Default)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn to_markdown(&self) -> String {
        let mut out = String::from(
            "| Portfolio | Annualized Return (%) | Annualized Volatility (%) | Sharpe Ratio |\n\
             |---|---:|---:|---:|\n",
        );
        for row in &self.rows {
            out.push_str(&format!(
                "| {} | {:.2} | {:.2} | {:.2} |\n",
                row.label,
                row.summary.ann_return_pct,
                row.summary.ann_vol_pct,
                row.summary.sharpe
            ));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("portfolio,ann_return_pct,ann_vol_pct,sharpe\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.label, row.summary.ann_return_pct, row.summary.ann_vol_pct, row.summary.sharpe
            ));
        }
        out
    }
}

/// Calendar-year returns for several portfolios: rows are years, columns are
/// portfolios; a blank cell means the portfolio has no data that year.
#[derive(Debug, Clone, Default)]
pub struct AnnualTable {
    pub labels: Vec<String>,
    pub years: Vec<i32>,
    /// `cells[year_index][label_index]`.
    pub cells: Vec<Vec<Option<f64>>>,
}

impl AnnualTable {
    /// Assembles the year-by-portfolio grid from per-portfolio breakdowns,
    /// covering the union of all years in ascending order.
    pub fn build(columns: &[(String, Vec<AnnualReturn>)]) -> Self {
        let mut years: Vec<i32> = columns
            .iter()
            .flat_map(|(_, rows)| rows.iter().map(|r| r.year))
            .collect();
        years.sort_unstable();
        years.dedup();

        let labels: Vec<String> = columns.iter().map(|(label, _)| label.clone()).collect();
        let cells = years
            .iter()
            .map(|&year| {
                columns
                    .iter()
                    .map(|(_, rows)| {
                        rows.iter().find(|r| r.year == year).map(|r| r.return_pct)
                    })
                    .collect()
            })
            .collect();
        Self { labels, years, cells }
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Year |");
        for label in &self.labels {
            out.push_str(&format!(" {label} |"));
        }
        out.push_str("\n|---|");
        for _ in &self.labels {
            out.push_str("---:|");
        }
        out.push('\n');
        for (year, row) in self.years.iter().zip(&self.cells) {
            out.push_str(&format!("| {year} |"));
            for cell in row {
                match cell {
                    Some(v) => out.push_str(&format!(" {v:.2} |")),
                    None => out.push_str("  |"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("year");
        for label in &self.labels {
            out.push(',');
            out.push_str(label);
        }
        out.push('\n');
        for (year, row) in self.years.iter().zip(&self.cells) {
            out.push_str(&year.to_string());
            for cell in row {
                out.push(',');
                if let Some(v) = cell {
                    out.push_str(&v.to_string());
                }
            }
            out.push('\n');
        }
        out
    }
}
