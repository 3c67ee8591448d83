//! Shared domain types.
//!
//! Every matrix and vector produced downstream is indexed by the sector order
//! of the [`PanelData`] it was derived from. Nothing reorders sectors after
//! ingestion.

use std::collections::HashSet;
use std::fmt;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sector labels used by the bundled data and their long names.
const KNOWN_SECTORS: &[(&str, &str)] = &[
    ("AF", "Agro & Food Industry"),
    ("AG", "Agriculture"),
    ("AM", "Automobiles"),
    ("BC", "Building & Construction"),
    ("BF", "Banks & Finance"),
    ("BFT", "Beverage, Food & Tobacco"),
    ("BK", "Bank"),
    ("BM", "Basic Materials"),
    ("BR", "Basic Resources"),
    ("CC", "Consumer & Cyclical"),
    ("CD", "Consumer Discretionary"),
    ("CD1", "Consumer Durables"),
    ("CE", "Cement"),
    ("CG", "Consumer Goods"),
    ("CG1", "Capital Goods"),
    ("CH", "Chemicals"),
    ("CM", "Construction & Materials"),
    ("CN", "Construction"),
    ("CP", "Consumer Products"),
    ("CS", "Consumer Staples"),
    ("CSR", "Consumer Services"),
    ("EC", "Energy & Chemical"),
    ("EG", "Energy"),
    ("EM", "Electrical Machinery"),
    ("EU", "Energy & Utilities"),
    ("FB", "Food & Beverages"),
    ("FN", "Finance"),
    ("GD", "Gold"),
    ("HC", "Health Care"),
    ("HG", "Household Goods"),
    ("HT", "Hotel & Tourism"),
    ("ID", "Industries"),
    ("IF", "Infrastructure"),
    ("IP", "Industrial Production"),
    ("IS", "Insurance"),
    ("IT", "Information Technology"),
    ("MD", "Media"),
    ("MF", "Manufacturing"),
    ("MG", "Mining"),
    ("MI", "Multi Investments"),
    ("MID", "Miscellaneous Industries"),
    ("MM", "Metals & Mining"),
    ("MO", "Mining & Oil"),
    ("MOT", "Motors"),
    ("MP", "Metal Products"),
    ("MP1", "Media & Publishing"),
    ("MT", "Media & Telecomm"),
    ("OC", "Oil & Coal Products"),
    ("OG", "Oil and Gas"),
    ("PC", "Property & Construction"),
    ("PE", "Power & Energy"),
    ("PG", "Personal Goods"),
    ("PH", "PetroChemicals"),
    ("PL", "Plantation"),
    ("PR", "Property"),
    ("PSU", "Public Sector Undertaking"),
    ("RB", "Rubber"),
    ("RE", "Real Estate"),
    ("RT", "Retail"),
    ("RY", "Realty"),
    ("SC", "Semiconductor"),
    ("ST", "Steel"),
    ("SU", "Securities"),
    ("TC", "Telecom"),
    ("TD", "Trade"),
    ("TE", "Transport & Equipment"),
    ("TP", "Transport"),
    ("TS", "Trade & Services"),
    ("TT", "Travel & Tourism"),
    ("TX", "Textiles"),
    ("UT", "Utilities"),
    ("WS", "Wholesale"),
];

/// A sector label within one market.
///
/// Serialized as the bare code; the long name is looked up again on read.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct SectorId {
    code: String,
    name: String,
}

impl SectorId {
    /// Builds a sector from its code, filling the name from the built-in
    /// table when the code is known.
    pub fn new(code: impl Into<String>) -> Result<Self> {
        let code = code.into().trim().to_string();
        if code.is_empty() {
            return Err(Error::InvalidInput("empty sector code".into()));
        }
        let name = KNOWN_SECTORS
            .iter()
            .find(|(c, _)| *c == code)
            .map(|(_, n)| n.to_string())
            .unwrap_or_else(|| code.clone());
        Ok(SectorId { code, name })
    }

    pub fn with_name(code: impl Into<String>, name: impl Into<String>) -> Result<Self> {
        let mut id = SectorId::new(code)?;
        id.name = name.into();
        Ok(id)
    }

    pub fn code(&self) -> &str {
        &self.code
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl fmt::Display for SectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code)
    }
}

impl From<SectorId> for String {
    fn from(id: SectorId) -> String {
        id.code
    }
}

impl TryFrom<String> for SectorId {
    type Error = Error;

    fn try_from(code: String) -> Result<Self> {
        SectorId::new(code)
    }
}

/// Builds sector ids from a list of codes.
pub fn sectors_from_codes<S: AsRef<str>>(codes: &[S]) -> Result<Vec<SectorId>> {
    codes.iter().map(|c| SectorId::new(c.as_ref())).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PanelKind {
    Prices,
    LogReturns,
}

/// One invariant violation found in a panel.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Finding {
    ShapeMismatch { rows: usize, columns: usize, dates: usize, sectors: usize },
    DuplicateSector { column: usize, code: String },
    DateNotIncreasing { row: usize, date: NaiveDate },
    NonFinite { row: usize, column: usize },
    TooFewRows { rows: usize },
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::ShapeMismatch { rows, columns, dates, sectors } => write!(
                f,
                "values are {rows}x{columns} but there are {dates} dates and {sectors} sectors"
            ),
            Finding::DuplicateSector { column, code } => {
                write!(f, "duplicate sector {code} at column {column}")
            }
            Finding::DateNotIncreasing { row, date } => {
                write!(f, "date {date} at row {row} does not follow the previous date")
            }
            Finding::NonFinite { row, column } => {
                write!(f, "non-finite value at ({row},{column})")
            }
            Finding::TooFewRows { rows } => write!(f, "price panel needs at least 2 rows, has {rows}"),
        }
    }
}

/// Aligned date-by-sector matrix of prices or log-returns.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelData {
    dates: Vec<NaiveDate>,
    sectors: Vec<SectorId>,
    values: DMatrix<f64>,
    kind: PanelKind,
}

impl PanelData {
    /// Builds a panel and rejects it if any invariant fails.
    pub fn new(
        dates: Vec<NaiveDate>,
        sectors: Vec<SectorId>,
        values: DMatrix<f64>,
        kind: PanelKind,
    ) -> Result<Self> {
        let panel = PanelData::unchecked(dates, sectors, values, kind);
        let findings = validate_panel(&panel);
        if findings.is_empty() {
            Ok(panel)
        } else {
            Err(Error::Validation(findings))
        }
    }

    /// Builds a panel without validation. Use [`validate_panel`] to inspect it.
    pub fn unchecked(
        dates: Vec<NaiveDate>,
        sectors: Vec<SectorId>,
        values: DMatrix<f64>,
        kind: PanelKind,
    ) -> Self {
        PanelData {
            dates,
            sectors,
            values,
            kind,
        }
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn sectors(&self) -> &[SectorId] {
        &self.sectors
    }

    /// Rows are dates, columns are sectors.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn kind(&self) -> PanelKind {
        self.kind
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_sectors(&self) -> usize {
        self.sectors.len()
    }

    /// Column `i` as an owned vector.
    pub fn series(&self, i: usize) -> Vec<f64> {
        self.values.column(i).iter().copied().collect()
    }

    /// Keeps only dates inside `[start, end]` (either bound optional).
    pub fn window(&self, start: Option<NaiveDate>, end: Option<NaiveDate>) -> Result<PanelData> {
        let keep: Vec<usize> = self
            .dates
            .iter()
            .enumerate()
            .filter(|(_, d)| start.is_none_or(|s| **d >= s) && end.is_none_or(|e| **d <= e))
            .map(|(i, _)| i)
            .collect();
        let values = self.values.select_rows(keep.iter());
        let dates = keep.iter().map(|&i| self.dates[i]).collect();
        PanelData::new(dates, self.sectors.clone(), values, self.kind)
    }

    /// Reorders sector columns; `order[k]` is the old index of new column `k`.
    pub fn permute_sectors(&self, order: &[usize]) -> Result<PanelData> {
        if order.len() != self.n_sectors() {
            return Err(Error::LengthMismatch {
                left: order.len(),
                right: self.n_sectors(),
            });
        }
        let values = self.values.select_columns(order.iter());
        let sectors = order.iter().map(|&i| self.sectors[i].clone()).collect();
        PanelData::new(self.dates.clone(), sectors, values, self.kind)
    }
}

/// Checks every [`PanelData`] invariant and reports one finding per violation.
pub fn validate_panel(panel: &PanelData) -> Vec<Finding> {
    let mut findings = Vec::new();
    let (rows, columns) = panel.values.shape();
    if rows != panel.dates.len() || columns != panel.sectors.len() {
        findings.push(Finding::ShapeMismatch {
            rows,
            columns,
            dates: panel.dates.len(),
            sectors: panel.sectors.len(),
        });
    }

    let mut seen = HashSet::new();
    for (column, sector) in panel.sectors.iter().enumerate() {
        if !seen.insert(sector.code()) {
            findings.push(Finding::DuplicateSector {
                column,
                code: sector.code().to_string(),
            });
        }
    }

    for (row, pair) in panel.dates.windows(2).enumerate() {
        if pair[1] <= pair[0] {
            findings.push(Finding::DateNotIncreasing {
                row: row + 1,
                date: pair[1],
            });
        }
    }

    for row in 0..rows {
        for column in 0..columns {
            if !panel.values[(row, column)].is_finite() {
                findings.push(Finding::NonFinite { row, column });
            }
        }
    }

    if panel.kind == PanelKind::Prices && panel.dates.len() < 2 {
        findings.push(Finding::TooFewRows {
            rows: panel.dates.len(),
        });
    }
    findings
}

/// Sector-level size metrics. Absent values are `None`, never zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorFundamentals {
    pub sector: SectorId,
    pub market_cap: Option<f64>,
    pub revenue: Option<f64>,
    pub employees: Option<f64>,
}

impl SectorFundamentals {
    pub fn metric(&self, metric: SizeMetric) -> Option<f64> {
        match metric {
            SizeMetric::MarketCap => self.market_cap,
            SizeMetric::Revenue => self.revenue,
            SizeMetric::Employees => self.employees,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeMetric {
    MarketCap,
    Revenue,
    Employees,
}

impl SizeMetric {
    pub const ALL: [SizeMetric; 3] = [SizeMetric::MarketCap, SizeMetric::Revenue, SizeMetric::Employees];

    pub fn as_str(self) -> &'static str {
        match self {
            SizeMetric::MarketCap => "market_cap",
            SizeMetric::Revenue => "revenue",
            SizeMetric::Employees => "employees",
        }
    }
}

impl fmt::Display for SizeMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Correlation matrix and its distance transform over one sector order.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationNet {
    pub(crate) sectors: Vec<SectorId>,
    pub(crate) rho: DMatrix<f64>,
    pub(crate) dist: DMatrix<f64>,
}

impl CorrelationNet {
    pub fn sectors(&self) -> &[SectorId] {
        &self.sectors
    }

    pub fn rho(&self) -> &DMatrix<f64> {
        &self.rho
    }

    pub fn dist(&self) -> &DMatrix<f64> {
        &self.dist
    }

    pub fn len(&self) -> usize {
        self.sectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sectors.is_empty()
    }
}
