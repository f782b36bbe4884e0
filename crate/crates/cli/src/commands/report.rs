//! `report`: regenerate the comparison and calendar-year tables from the
//! daily value series a previous backtest wrote. The daily files carry full
//! float precision, so the regenerated tables are byte-identical to the
//! originals — this command exists to re-render after hand-pruning columns or
//! to print the tables again without re-running the simulation.

use std::path::Path;

use chrono::NaiveDate;
use fundrank_core::backtest::{
    annual_returns, performance, AnnualTable, ComparisonRow, ComparisonTable,
};

use crate::config::RunConfig;
use crate::lock::OutputLock;
use crate::CliError;

use super::write_text;

pub fn run(config: &RunConfig) -> Result<(), CliError> {
    let _lock = OutputLock::acquire(&config.paths.output_dir)?;
    let mut rendered = 0usize;
    for group in ["stocks", "etfs"] {
        let dir = config.out(&format!("backtest/{group}"));
        let daily_path = dir.join("daily_value.csv");
        if !daily_path.exists() {
            continue;
        }
        println!("## {group}");
        render_group(&dir, &daily_path)?;
        rendered += 1;
    }
    if rendered == 0 {
        return Err(crate::io_err(
            &config.out("backtest"),
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "no daily_value.csv found; run the backtest command first",
            ),
        ));
    }
    Ok(())
}

/// Parses a `date,<label>,...` value file back into per-portfolio series.
/// Blank cells (a benchmark that starts late) are simply absent from that
/// column's series.
pub(crate) fn parse_daily(
    path: &Path,
) -> Result<Vec<(String, Vec<(NaiveDate, f64)>)>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::io_err(path, e))?;
    let bad = |line: usize, msg: String| {
        CliError::Config(format!("{}:{line}: {msg}", path.display()))
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| bad(1, "empty file".into()))?;
    let mut fields = header.split(',');
    if fields.next() != Some("date") {
        return Err(bad(1, "first column must be `date`".into()));
    }
    let mut columns: Vec<(String, Vec<(NaiveDate, f64)>)> =
        fields.map(|label| (label.to_string(), Vec::new())).collect();
    if columns.is_empty() {
        return Err(bad(1, "no portfolio columns".into()));
    }
    for (idx, line) in lines {
        let row = idx + 1;
        let mut cells = line.split(',');
        let date_cell = cells.next().ok_or_else(|| bad(row, "missing date".into()))?;
        let date = date_cell
            .parse::<NaiveDate>()
            .map_err(|e| bad(row, format!("date {date_cell:?}: {e}")))?;
        let mut taken = 0usize;
        for (cell, column) in cells.by_ref().zip(columns.iter_mut()) {
            taken += 1;
            if cell.is_empty() {
                continue;
            }
            let value: f64 =
                cell.parse().map_err(|e| bad(row, format!("value {cell:?}: {e}")))?;
            column.1.push((date, value));
        }
        if taken != columns.len() || cells.next().is_some() {
            return Err(bad(row, format!("expected {} value cells", columns.len())));
        }
    }
    Ok(columns)
}

fn render_group(dir: &Path, daily_path: &Path) -> Result<(), CliError> {
    let columns = parse_daily(daily_path)?;
    let mut comparison = ComparisonTable::default();
    let mut annual_columns = Vec::new();
    for (label, series) in &columns {
        comparison.rows.push(ComparisonRow {
            label: label.clone(),
            summary: performance(series)?,
        });
        annual_columns.push((label.clone(), annual_returns(series)?));
    }
    let annual = AnnualTable::build(&annual_columns);
    write_text(&dir.join("summary.csv"), &comparison.to_csv())?;
    write_text(&dir.join("summary.md"), &comparison.to_markdown())?;
    write_text(&dir.join("annual.csv"), &annual.to_csv())?;
    write_text(&dir.join("annual.md"), &annual.to_markdown())?;
    print!("{}", comparison.to_markdown());
    println!();
    print!("{}", annual.to_markdown());
    Ok(())
}
