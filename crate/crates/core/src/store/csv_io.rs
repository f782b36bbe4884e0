//! Delimited-file ingest and export for the point-in-time store.
//!
//! Ingest is strict and atomic per file: headers must match the documented
//! schemas exactly, every cell is validated with its line number, duplicate
//! keys abort with the offending lines listed, and nothing is inserted unless
//! the whole file is clean. Exports round-trip bit-identically because floats
//! are written with the shortest representation that parses back exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::NaiveDate;
use csv::StringRecord;

use crate::calendar::BusinessCalendar;

use super::{
    EtfMeta, PdfHolding, PdfSnapshot, PriceBar, StatementRecord, Store, StoreError, FEATURE_COLUMNS,
    FEATURE_COUNT,
};

const STATEMENT_KEY_COLUMNS: [&str; 3] = ["ticker", "period_end", "available_from"];
const PRICE_COLUMNS: [&str; 4] = ["ticker", "date", "close", "volume"];
const PDF_COLUMNS: [&str; 4] = ["etf", "date", "ticker", "weight"];

/// Tolerance for PDF weight sums: files routinely carry cash residue.
const PDF_WEIGHT_SUM_TOLERANCE: f64 = 0.02;

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

fn io_err(path: &Path, source: std::io::Error) -> StoreError {
    StoreError::Io { path: path_str(path), source }
}

fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> StoreError {
    StoreError::Parse { path: path_str(path), line, msg: msg.into() }
}

fn csv_err(path: &Path, err: csv::Error) -> StoreError {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    match err.kind() {
        csv::ErrorKind::Io(_) => {
            // Re-split so IO problems (missing file, permissions) keep their kind.
            match err.into_kind() {
                csv::ErrorKind::Io(e) => io_err(path, e),
                _ => unreachable!("kind checked above"),
            }
        }
        _ => parse_err(path, line, err.to_string()),
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>, StoreError> {
    csv::ReaderBuilder::new().from_path(path).map_err(|e| csv_err(path, e))
}

fn check_header(path: &Path, got: &StringRecord, expected: &[&str]) -> Result<(), StoreError> {
    let schema = || StoreError::Schema {
        path: path_str(path),
        msg: format!(
            "header mismatch: expected `{}`, found `{}`",
            expected.join(","),
            got.iter().collect::<Vec<_>>().join(",")
        ),
    };
    if got.len() != expected.len() {
        return Err(schema());
    }
    if got.iter().zip(expected).any(|(g, e)| g != *e) {
        return Err(schema());
    }
    Ok(())
}

fn record_line(record: &StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn parse_date(path: &Path, line: u64, field: &str, value: &str) -> Result<NaiveDate, StoreError> {
    NaiveDate::parse_from_str(value, "%Y-%m-%d")
        .map_err(|_| parse_err(path, line, format!("{field}: `{value}` is not an ISO date")))
}

fn parse_finite(path: &Path, line: u64, field: &str, value: &str) -> Result<f64, StoreError> {
    let v: f64 = value
        .parse()
        .map_err(|_| parse_err(path, line, format!("{field}: `{value}` is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("{field}: `{value}` is not finite")));
    }
    Ok(v)
}

fn nonempty<'a>(path: &Path, line: u64, field: &str, value: &'a str) -> Result<&'a str, StoreError> {
    if value.is_empty() {
        return Err(parse_err(path, line, format!("{field}: empty")));
    }
    Ok(value)
}

fn duplicates_err(path: &Path, what: &str, lines: BTreeSet<u64>) -> StoreError {
    StoreError::Duplicates {
        path: path_str(path),
        what: what.to_string(),
        lines: lines.into_iter().collect(),
    }
}

impl Store {
    /// Ingests a statements file. Blank `available_from` cells default to the
    /// last business day of the quarter after the period end; blank feature
    /// cells are recorded as missing. Returns the number of rows ingested.
    pub fn ingest_statements(
        &mut self,
        path: &Path,
        cal: &BusinessCalendar,
    ) -> Result<usize, StoreError> {
        let mut rdr = open_reader(path)?;
        let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
        let expected: Vec<&str> =
            STATEMENT_KEY_COLUMNS.iter().chain(FEATURE_COLUMNS.iter()).copied().collect();
        check_header(path, &header, &expected)?;

        let mut rows: Vec<StatementRecord> = Vec::new();
        let mut seen: BTreeMap<(String, NaiveDate), u64> = BTreeMap::new();
        let mut dup_lines: BTreeSet<u64> = BTreeSet::new();
        for result in rdr.records() {
            let record = result.map_err(|e| csv_err(path, e))?;
            let line = record_line(&record);
            let ticker = nonempty(path, line, "ticker", &record[0])?.to_string();
            let period_end = parse_date(path, line, "period_end", &record[1])?;
            let available_from = if record[2].is_empty() {
                cal.derive_available_from(period_end)
            } else {
                let explicit = parse_date(path, line, "available_from", &record[2])?;
                if explicit < period_end {
                    return Err(parse_err(
                        path,
                        line,
                        format!("available_from {explicit} precedes period_end {period_end}"),
                    ));
                }
                explicit
            };
            let mut features = [None; FEATURE_COUNT];
            for (i, name) in FEATURE_COLUMNS.iter().enumerate() {
                let cell = &record[3 + i];
                if !cell.is_empty() {
                    features[i] = Some(parse_finite(path, line, name, cell)?);
                }
            }
            let key = (ticker.clone(), period_end);
            if let Some(&first) = seen.get(&key) {
                dup_lines.insert(first);
                dup_lines.insert(line);
            } else {
                if self.statements.get(&ticker).is_some_and(|list| {
                    list.binary_search_by_key(&period_end, |r| r.period_end).is_ok()
                }) {
                    dup_lines.insert(line);
                }
                seen.insert(key, line);
            }
            rows.push(StatementRecord { ticker, period_end, available_from, features });
        }
        if !dup_lines.is_empty() {
            return Err(duplicates_err(path, "(ticker, period_end)", dup_lines));
        }
        let n = rows.len();
        for rec in rows {
            self.insert_statement(rec);
        }
        Ok(n)
    }

    /// Ingests a price file (`ticker,date,close,volume`). Closes must be
    /// positive, volumes non-negative. Returns the number of bars ingested.
    pub fn ingest_prices(&mut self, path: &Path) -> Result<usize, StoreError> {
        let mut rdr = open_reader(path)?;
        let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
        check_header(path, &header, &PRICE_COLUMNS)?;

        let mut rows: Vec<PriceBar> = Vec::new();
        let mut seen: BTreeMap<(String, NaiveDate), u64> = BTreeMap::new();
        let mut dup_lines: BTreeSet<u64> = BTreeSet::new();
        for result in rdr.records() {
            let record = result.map_err(|e| csv_err(path, e))?;
            let line = record_line(&record);
            let ticker = nonempty(path, line, "ticker", &record[0])?.to_string();
            let date = parse_date(path, line, "date", &record[1])?;
            let close = parse_finite(path, line, "close", &record[2])?;
            if close <= 0.0 {
                return Err(parse_err(path, line, format!("close: {close} is not positive")));
            }
            let volume = parse_finite(path, line, "volume", &record[3])?;
            if volume < 0.0 {
                return Err(parse_err(path, line, format!("volume: {volume} is negative")));
            }
            let key = (ticker.clone(), date);
            if let Some(&first) = seen.get(&key) {
                dup_lines.insert(first);
                dup_lines.insert(line);
            } else {
                if self
                    .prices
                    .get(&ticker)
                    .is_some_and(|s| s.dates.binary_search(&date).is_ok())
                {
                    dup_lines.insert(line);
                }
                seen.insert(key, line);
            }
            rows.push(PriceBar { ticker, date, close, volume });
        }
        if !dup_lines.is_empty() {
            return Err(duplicates_err(path, "(ticker, date)", dup_lines));
        }
        let n = rows.len();
        for bar in rows {
            self.insert_price(bar);
        }
        Ok(n)
    }

    /// Ingests a long-format holdings file (`etf,date,ticker,weight`). Rows
    /// sharing `(etf, date)` form one snapshot; each snapshot's weights must
    /// be non-negative, component tickers unique, and the weight sum within
    /// ±0.02 of 1. Returns the number of component rows ingested.
    pub fn ingest_pdfs(&mut self, path: &Path) -> Result<usize, StoreError> {
        let mut rdr = open_reader(path)?;
        let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
        check_header(path, &header, &PDF_COLUMNS)?;

        // Snapshot assembly keyed by (etf, date); insertion-ordered rows kept
        // per snapshot so exports preserve component order.
        let mut snaps: BTreeMap<(String, NaiveDate), (u64, Vec<PdfHolding>)> = BTreeMap::new();
        let mut component_lines: BTreeMap<(String, NaiveDate, String), u64> = BTreeMap::new();
        let mut dup_lines: BTreeSet<u64> = BTreeSet::new();
        let mut n_rows = 0usize;
        for result in rdr.records() {
            let record = result.map_err(|e| csv_err(path, e))?;
            let line = record_line(&record);
            let etf = nonempty(path, line, "etf", &record[0])?.to_string();
            let date = parse_date(path, line, "date", &record[1])?;
            let ticker = nonempty(path, line, "ticker", &record[2])?.to_string();
            let weight = parse_finite(path, line, "weight", &record[3])?;
            if weight < 0.0 {
                return Err(parse_err(path, line, format!("weight: {weight} is negative")));
            }
            let comp_key = (etf.clone(), date, ticker.clone());
            if let Some(&first) = component_lines.get(&comp_key) {
                dup_lines.insert(first);
                dup_lines.insert(line);
            } else {
                component_lines.insert(comp_key, line);
            }
            snaps
                .entry((etf, date))
                .or_insert_with(|| (line, Vec::new()))
                .1
                .push(PdfHolding { ticker, weight });
            n_rows += 1;
        }
        if !dup_lines.is_empty() {
            return Err(duplicates_err(path, "(etf, date, ticker)", dup_lines));
        }
        for ((etf, date), (first_line, holdings)) in &snaps {
            let sum: f64 = holdings.iter().map(|h| h.weight).sum();
            if (sum - 1.0).abs() > PDF_WEIGHT_SUM_TOLERANCE {
                return Err(parse_err(
                    path,
                    *first_line,
                    format!("weights for {etf} at {date} sum to {sum}, outside 1±{PDF_WEIGHT_SUM_TOLERANCE}"),
                ));
            }
            if self.pdfs.get(etf).is_some_and(|list| {
                list.binary_search_by_key(date, |s| s.date).is_ok()
            }) {
                return Err(duplicates_err(path, "(etf, date)", BTreeSet::from([*first_line])));
            }
        }
        for ((etf, date), (_, holdings)) in snaps {
            self.insert_pdf(PdfSnapshot { etf, date, holdings });
        }
        Ok(n_rows)
    }

    // -----------------------------------------------------------------------
    // Export (audits and ingest round-trips)
    // -----------------------------------------------------------------------

    pub fn export_statements(&self, path: &Path) -> Result<usize, StoreError> {
        let mut wtr = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        let expected: Vec<&str> =
            STATEMENT_KEY_COLUMNS.iter().chain(FEATURE_COLUMNS.iter()).copied().collect();
        wtr.write_record(&expected).map_err(|e| csv_err(path, e))?;
        let mut n = 0usize;
        for list in self.statements.values() {
            for rec in list {
                let mut row = vec![
                    rec.ticker.clone(),
                    rec.period_end.to_string(),
                    rec.available_from.to_string(),
                ];
                for f in &rec.features {
                    row.push(f.map(|v| v.to_string()).unwrap_or_default());
                }
                wtr.write_record(&row).map_err(|e| csv_err(path, e))?;
                n += 1;
            }
        }
        wtr.flush().map_err(|e| io_err(path, e))?;
        Ok(n)
    }

    pub fn export_prices(&self, path: &Path) -> Result<usize, StoreError> {
        let mut wtr = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        wtr.write_record(PRICE_COLUMNS).map_err(|e| csv_err(path, e))?;
        let mut n = 0usize;
        for (ticker, series) in &self.prices {
            for i in 0..series.dates.len() {
                wtr.write_record([
                    ticker.as_str(),
                    &series.dates[i].to_string(),
                    &series.closes[i].to_string(),
                    &series.volumes[i].to_string(),
                ])
                .map_err(|e| csv_err(path, e))?;
                n += 1;
            }
        }
        wtr.flush().map_err(|e| io_err(path, e))?;
        Ok(n)
    }

    pub fn export_pdfs(&self, path: &Path) -> Result<usize, StoreError> {
        let mut wtr = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        wtr.write_record(PDF_COLUMNS).map_err(|e| csv_err(path, e))?;
        let mut n = 0usize;
        for (etf, list) in &self.pdfs {
            for snap in list {
                for h in &snap.holdings {
                    wtr.write_record([
                        etf.as_str(),
                        &snap.date.to_string(),
                        h.ticker.as_str(),
                        &h.weight.to_string(),
                    ])
                    .map_err(|e| csv_err(path, e))?;
                    n += 1;
                }
            }
        }
        wtr.flush().map_err(|e| io_err(path, e))?;
        Ok(n)
    }
}

// ---------------------------------------------------------------------------
// Universe and auxiliary file loaders
// ---------------------------------------------------------------------------

/// Loads the stock universe (`ticker` per row), sorted, duplicates rejected.
pub fn load_stock_universe(path: &Path) -> Result<Vec<String>, StoreError> {
    let mut rdr = open_reader(path)?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    check_header(path, &header, &["ticker"])?;
    let mut seen: BTreeMap<String, u64> = BTreeMap::new();
    let mut dup_lines: BTreeSet<u64> = BTreeSet::new();
    for result in rdr.records() {
        let record = result.map_err(|e| csv_err(path, e))?;
        let line = record_line(&record);
        let ticker = nonempty(path, line, "ticker", &record[0])?.to_string();
        if let Some(&first) = seen.get(&ticker) {
            dup_lines.insert(first);
            dup_lines.insert(line);
        } else {
            seen.insert(ticker, line);
        }
    }
    if !dup_lines.is_empty() {
        return Err(duplicates_err(path, "ticker", dup_lines));
    }
    Ok(seen.into_keys().collect())
}

/// Loads the ETF universe (`etf,inception` per row), sorted by ticker.
pub fn load_etf_universe(path: &Path) -> Result<Vec<EtfMeta>, StoreError> {
    let mut rdr = open_reader(path)?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    check_header(path, &header, &["etf", "inception"])?;
    let mut seen: BTreeMap<String, (u64, NaiveDate)> = BTreeMap::new();
    let mut dup_lines: BTreeSet<u64> = BTreeSet::new();
    for result in rdr.records() {
        let record = result.map_err(|e| csv_err(path, e))?;
        let line = record_line(&record);
        let ticker = nonempty(path, line, "etf", &record[0])?.to_string();
        let inception = parse_date(path, line, "inception", &record[1])?;
        if let Some(&(first, _)) = seen.get(&ticker) {
            dup_lines.insert(first);
            dup_lines.insert(line);
        } else {
            seen.insert(ticker, (line, inception));
        }
    }
    if !dup_lines.is_empty() {
        return Err(duplicates_err(path, "etf", dup_lines));
    }
    Ok(seen
        .into_iter()
        .map(|(ticker, (_, inception))| EtfMeta { ticker, inception })
        .collect())
}

/// Loads a holiday list (`date` per row) for calendar construction.
pub fn load_holiday_file(path: &Path) -> Result<Vec<NaiveDate>, StoreError> {
    let mut rdr = open_reader(path)?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    check_header(path, &header, &["date"])?;
    let mut dates = Vec::new();
    for result in rdr.records() {
        let record = result.map_err(|e| csv_err(path, e))?;
        let line = record_line(&record);
        dates.push(parse_date(path, line, "date", &record[0])?);
    }
    Ok(dates)
}

/// Loads a benchmark index series (`date,close`), sorted by date.
pub fn load_index_series(path: &Path) -> Result<Vec<(NaiveDate, f64)>, StoreError> {
    let mut rdr = open_reader(path)?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    check_header(path, &header, &["date", "close"])?;
    let mut seen: BTreeMap<NaiveDate, u64> = BTreeMap::new();
    let mut dup_lines: BTreeSet<u64> = BTreeSet::new();
    let mut rows = Vec::new();
    for result in rdr.records() {
        let record = result.map_err(|e| csv_err(path, e))?;
        let line = record_line(&record);
        let date = parse_date(path, line, "date", &record[0])?;
        let close = parse_finite(path, line, "close", &record[1])?;
        if close <= 0.0 {
            return Err(parse_err(path, line, format!("close: {close} is not positive")));
        }
        if let Some(&first) = seen.get(&date) {
            dup_lines.insert(first);
            dup_lines.insert(line);
        } else {
            seen.insert(date, line);
        }
        rows.push((date, close));
    }
    if !dup_lines.is_empty() {
        return Err(duplicates_err(path, "date", dup_lines));
    }
    rows.sort_by_key(|&(d, _)| d);
    Ok(rows)
}
