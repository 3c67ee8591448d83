//! Seeded one-factor sector market.
//!
//! Each sector has a size `s_i ~ U(1, 10)` and a factor loading
//! `beta_i = s_i / max(s)`. Daily log returns are
//! `sigma_f * (beta_i f_t + idio * e_it)` with independent standard normal
//! `f` and `e`, so larger sectors co-move more with the market.

use chrono::{Datelike, Days, NaiveDate, Weekday};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::CompanyRecord;
use crate::model::{PanelData, PanelKind, SectorId};

/// Sector codes of the generated market, in column order.
pub const SECTOR_CODES: [&str; 10] = ["FN", "IT", "ID", "BM", "CD", "CS", "EG", "HC", "TC", "UT"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_sectors: usize,
    /// Number of daily returns; the price panel has one more row.
    pub n_returns: usize,
    pub factor_vol: f64,
    /// Idiosyncratic volatility as a multiple of the factor volatility.
    pub idio_ratio: f64,
    pub companies_per_sector: usize,
    pub start: NaiveDate,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_sectors: 10,
            n_returns: 250,
            factor_vol: 0.01,
            idio_ratio: 0.3,
            companies_per_sector: 3,
            start: NaiveDate::from_ymd_opt(2015, 1, 2).expect("valid date"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMarket {
    pub prices: PanelData,
    pub companies: Vec<CompanyRecord>,
    /// Sector sizes, equal to the summed company market caps.
    pub sizes: Vec<f64>,
    pub loadings: Vec<f64>,
}

fn business_days(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(count);
    let mut day = start;
    while out.len() < count {
        if !matches!(day.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(day);
        }
        day = day + Days::new(1);
    }
    out
}

pub fn generate(seed: u64, config: &SyntheticConfig) -> Result<SyntheticMarket> {
    let n = config.n_sectors;
    if n < 3 || n > SECTOR_CODES.len() {
        return Err(Error::InvalidInput(format!(
            "synthetic market supports 3 to {} sectors, got {n}",
            SECTOR_CODES.len()
        )));
    }
    if config.n_returns < 3 || config.companies_per_sector == 0 {
        return Err(Error::InvalidInput("synthetic market needs at least 3 returns and 1 company per sector".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sectors: Vec<SectorId> = SECTOR_CODES[..n]
        .iter()
        .map(|c| SectorId::new(*c))
        .collect::<Result<_>>()?;

    let sizes: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..10.0)).collect();
    let largest = sizes.iter().copied().fold(f64::MIN, f64::max);
    let loadings: Vec<f64> = sizes.iter().map(|s| s / largest).collect();

    let t = config.n_returns;
    let mut prices = DMatrix::zeros(t + 1, n);
    prices.row_mut(0).fill(100.0);
    for step in 1..=t {
        let f: f64 = rng.sample(StandardNormal);
        for i in 0..n {
            let e: f64 = rng.sample(StandardNormal);
            let r = config.factor_vol * (loadings[i] * f + config.idio_ratio * e);
            prices[(step, i)] = prices[(step - 1, i)] * r.exp();
        }
    }

    let mut companies = Vec::with_capacity(n * config.companies_per_sector);
    for (i, sector) in sectors.iter().enumerate() {
        let shares: Vec<f64> = (0..config.companies_per_sector)
            .map(|_| rng.random_range(0.5..1.5))
            .collect();
        let total: f64 = shares.iter().sum();
        for (k, share) in shares.iter().enumerate() {
            let cap = sizes[i] * share / total;
            companies.push(CompanyRecord {
                company: format!("{}-{}", sector.code(), k + 1),
                sector: sector.clone(),
                market_cap: Some(cap),
                revenue: Some(cap * rng.random_range(0.4..0.8)),
                employees: Some((cap * 1000.0 * rng.random_range(0.5..1.5)).round()),
            });
        }
    }

    let panel = PanelData::new(business_days(config.start, t + 1), sectors, prices, PanelKind::Prices)?;
    Ok(SyntheticMarket {
        prices: panel,
        companies,
        sizes,
        loadings,
    })
}
