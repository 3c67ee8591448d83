//! Price and fundamentals file parsing, log-returns, sector aggregation.
//!
//! Prices CSV: header `date,<CODE1>,<CODE2>,...`, ISO-8601 dates, `.` decimal
//! point, blank cell = missing. Fundamentals CSV: header
//! `company,sector,market_cap,revenue,employees`, blank cell = missing.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PanelData, PanelKind, SectorFundamentals, SectorId};

/// What to do with a date on which some sector has no price.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    /// Drop the whole date for every sector.
    #[default]
    DropRow,
    /// Carry the last observed price forward. Leading dates that cannot be
    /// filled are dropped.
    ForwardFill,
}

impl MissingPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            MissingPolicy::DropRow => "drop_row",
            MissingPolicy::ForwardFill => "forward_fill",
        }
    }
}

/// A parsed panel together with what the missing-data policy did to it.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelLoad {
    pub panel: PanelData,
    pub rows_read: usize,
    pub rows_dropped: usize,
    pub cells_filled: usize,
}

/// One listed company and its size metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct CompanyRecord {
    pub company: String,
    pub sector: SectorId,
    pub market_cap: Option<f64>,
    pub revenue: Option<f64>,
    pub employees: Option<f64>,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn csv_error(err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    Error::Parse {
        line,
        message: err.to_string(),
    }
}

fn parse_cell(raw: &str, line: u64, column: &str) -> Result<Option<f64>> {
    let cell = raw.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(Error::Value {
            line,
            column: column.to_string(),
            value: cell.to_string(),
        }),
    }
}

/// Loads a prices CSV. Column order follows the header.
pub fn load_prices(path: impl AsRef<Path>, policy: MissingPolicy) -> Result<PanelData> {
    Ok(load_prices_detailed(path, policy)?.panel)
}

pub fn load_prices_detailed(path: impl AsRef<Path>, policy: MissingPolicy) -> Result<PanelLoad> {
    read_panel_csv(open(path.as_ref())?, PanelKind::Prices, policy)
}

/// Parses a `date,<codes...>` CSV into a panel of the given kind.
pub fn read_panel_csv<R: Read>(reader: R, kind: PanelKind, policy: MissingPolicy) -> Result<PanelLoad> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    match header.get(0) {
        Some(h) if h.trim().eq_ignore_ascii_case("date") => {}
        Some(h) => {
            return Err(Error::Schema(format!(
                "first column must be `date`, found {:?}",
                h.trim()
            )))
        }
        None => return Err(Error::Schema("empty header".into())),
    }
    if header.len() < 2 {
        return Err(Error::Schema("no sector columns".into()));
    }
    let codes: Vec<String> = header.iter().skip(1).map(|c| c.trim().to_string()).collect();
    let sectors = codes
        .iter()
        .enumerate()
        .map(|(k, c)| {
            SectorId::new(c.as_str())
                .map_err(|_| Error::Schema(format!("empty sector code in header column {}", k + 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = sectors.len();

    let mut dates = Vec::new();
    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        if record.len() != n + 1 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", n + 1, record.len()),
            });
        }
        let raw_date = record[0].trim();
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d").map_err(|_| Error::Parse {
            line,
            message: format!("invalid date {raw_date:?}, expected YYYY-MM-DD"),
        })?;
        let row = record
            .iter()
            .skip(1)
            .zip(&codes)
            .map(|(cell, code)| parse_cell(cell, line, code))
            .collect::<Result<Vec<_>>>()?;
        dates.push(date);
        rows.push(row);
    }

    let rows_read = rows.len();
    let mut cells_filled = 0;
    let mut kept_dates = Vec::with_capacity(rows_read);
    let mut kept: Vec<f64> = Vec::with_capacity(rows_read * n);
    match policy {
        MissingPolicy::DropRow => {
            for (date, row) in dates.into_iter().zip(&rows) {
                if row.iter().all(Option::is_some) {
                    kept_dates.push(date);
                    kept.extend(row.iter().map(|v| v.unwrap()));
                }
            }
        }
        MissingPolicy::ForwardFill => {
            let mut last: Vec<Option<f64>> = vec![None; n];
            for (date, row) in dates.into_iter().zip(&rows) {
                let mut filled = 0;
                for (slot, cell) in last.iter_mut().zip(row) {
                    match cell {
                        Some(v) => *slot = Some(*v),
                        None if slot.is_some() => filled += 1,
                        None => {}
                    }
                }
                if last.iter().all(Option::is_some) {
                    cells_filled += filled;
                    kept_dates.push(date);
                    kept.extend(last.iter().map(|v| v.unwrap()));
                }
            }
        }
    }

    let rows_dropped = rows_read - kept_dates.len();
    let values = DMatrix::from_row_slice(kept_dates.len(), n, &kept);
    let panel = PanelData::new(kept_dates, sectors, values, kind)?;
    Ok(PanelLoad {
        panel,
        rows_read,
        rows_dropped,
        cells_filled,
    })
}

/// Writes a panel as `date,<codes...>` with round-trip float formatting.
pub fn write_panel_csv<W: Write>(panel: &PanelData, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["date".to_string()];
    header.extend(panel.sectors().iter().map(|s| s.code().to_string()));
    wtr.write_record(&header).map_err(csv_error)?;
    for (t, date) in panel.dates().iter().enumerate() {
        let mut row = vec![date.format("%Y-%m-%d").to_string()];
        row.extend(panel.values().row(t).iter().map(|v| v.to_string()));
        wtr.write_record(&row).map_err(csv_error)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Converts prices to log-returns, `ln P(t) - ln P(t-1)`, dated at `t`.
pub fn to_log_returns(prices: &PanelData) -> Result<PanelData> {
    if prices.kind() != PanelKind::Prices {
        return Err(Error::InvalidInput("to_log_returns expects a price panel".into()));
    }
    let t = prices.n_dates();
    if t < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 dates, have {t}")));
    }
    let values = prices.values();
    for (row, date) in prices.dates().iter().enumerate() {
        for (col, sector) in prices.sectors().iter().enumerate() {
            let v = values[(row, col)];
            if v <= 0.0 {
                return Err(Error::Domain {
                    date: date.to_string(),
                    sector: sector.code().to_string(),
                    value: v,
                });
            }
        }
    }
    let n = prices.n_sectors();
    let returns = DMatrix::from_fn(t - 1, n, |r, c| values[(r + 1, c)].ln() - values[(r, c)].ln());
    PanelData::new(
        prices.dates()[1..].to_vec(),
        prices.sectors().to_vec(),
        returns,
        PanelKind::LogReturns,
    )
}

const FUNDAMENTALS_HEADER: [&str; 5] = ["company", "sector", "market_cap", "revenue", "employees"];

pub fn load_fundamentals(path: impl AsRef<Path>) -> Result<Vec<CompanyRecord>> {
    read_fundamentals_csv(open(path.as_ref())?)
}

/// Parses a company-level fundamentals CSV.
pub fn read_fundamentals_csv<R: Read>(reader: R) -> Result<Vec<CompanyRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != FUNDAMENTALS_HEADER {
        return Err(Error::Schema(format!(
            "fundamentals header must be `{}`, found `{}`",
            FUNDAMENTALS_HEADER.join(","),
            names.join(",")
        )));
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        if record.len() != FUNDAMENTALS_HEADER.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected 5 fields, found {}", record.len()),
            });
        }
        let sector = SectorId::new(&record[1]).map_err(|_| Error::Parse {
            line,
            message: "empty sector code".into(),
        })?;
        let metric = |k: usize| -> Result<Option<f64>> {
            let v = parse_cell(&record[k], line, FUNDAMENTALS_HEADER[k])?;
            match v {
                Some(x) if x < 0.0 => Err(Error::Value {
                    line,
                    column: FUNDAMENTALS_HEADER[k].into(),
                    value: record[k].trim().into(),
                }),
                other => Ok(other),
            }
        };
        out.push(CompanyRecord {
            company: record[0].trim().to_string(),
            sector,
            market_cap: metric(2)?,
            revenue: metric(3)?,
            employees: metric(4)?,
        });
    }
    Ok(out)
}

/// Sums present values in ascending order, so the result does not depend on
/// record order.
fn order_free_sum(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    Some(values.iter().sum())
}

/// Writes company rows with the same header `load_fundamentals` expects.
pub fn write_fundamentals_csv<W: Write>(records: &[CompanyRecord], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(FUNDAMENTALS_HEADER).map_err(csv_error)?;
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        wtr.write_record([
            r.company.clone(),
            r.sector.code().to_string(),
            cell(r.market_cap),
            cell(r.revenue),
            cell(r.employees),
        ])
        .map_err(csv_error)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Sums company metrics per sector.
///
/// A sector metric is missing iff every company in the sector lacks it.
/// Output follows `market` order; sectors with no usable metric are omitted.
pub fn aggregate_fundamentals(
    records: &[CompanyRecord],
    market: &[SectorId],
) -> Result<Vec<SectorFundamentals>> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no company records"));
    }
    let index: HashMap<&str, usize> = market
        .iter()
        .enumerate()
        .map(|(i, s)| (s.code(), i))
        .collect();
    let mut buckets: Vec<[Vec<f64>; 3]> = vec![Default::default(); market.len()];
    for rec in records {
        let &i = index
            .get(rec.sector.code())
            .ok_or_else(|| Error::UnknownSector {
                company: rec.company.clone(),
                code: rec.sector.code().to_string(),
            })?;
        for (bucket, value) in buckets[i]
            .iter_mut()
            .zip([rec.market_cap, rec.revenue, rec.employees])
        {
            bucket.extend(value);
        }
    }
    Ok(market
        .iter()
        .zip(buckets)
        .filter_map(|(sector, [mc, rev, emp])| {
            let f = SectorFundamentals {
                sector: sector.clone(),
                market_cap: order_free_sum(mc),
                revenue: order_free_sum(rev),
                employees: order_free_sum(emp),
            };
            (f.market_cap.is_some() || f.revenue.is_some() || f.employees.is_some()).then_some(f)
        })
        .collect())
}

const SECTOR_FUNDAMENTALS_HEADER: [&str; 4] = ["sector", "market_cap", "revenue", "employees"];

/// Writes aggregated fundamentals as `sector,market_cap,revenue,employees`.
pub fn write_sector_fundamentals_csv<W: Write>(rows: &[SectorFundamentals], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(SECTOR_FUNDAMENTALS_HEADER).map_err(csv_error)?;
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for f in rows {
        wtr.write_record([
            f.sector.code().to_string(),
            cell(f.market_cap),
            cell(f.revenue),
            cell(f.employees),
        ])
        .map_err(csv_error)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn read_sector_fundamentals_csv<R: Read>(reader: R) -> Result<Vec<SectorFundamentals>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != SECTOR_FUNDAMENTALS_HEADER {
        return Err(Error::Schema(format!(
            "sector fundamentals header must be `{}`",
            SECTOR_FUNDAMENTALS_HEADER.join(",")
        )));
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        out.push(SectorFundamentals {
            sector: SectorId::new(&record[0])?,
            market_cap: parse_cell(&record[1], line, "market_cap")?,
            revenue: parse_cell(&record[2], line, "revenue")?,
            employees: parse_cell(&record[3], line, "employees")?,
        });
    }
    Ok(out)
}
