//! Standardized simple regression of centrality on sector size.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::centrality::CentralityReport;
use crate::error::{Error, Result};
use crate::ingest::csv_error;
use crate::model::{SectorFundamentals, SectorId, SizeMetric};

/// Rescale to mean 0 and sample (N-1) standard deviation 1.
pub fn standardize(v: &[f64]) -> Result<Vec<f64>> {
    if v.len() < 2 {
        return Err(Error::InvalidInput(format!("standardize needs at least 2 values, got {}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("standardize needs finite values".into()));
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let ss: f64 = v.iter().map(|x| (x - mean).powi(2)).sum();
    let sd = (ss / (n - 1.0)).sqrt();
    let magnitude = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if sd <= 1e-14 * magnitude || sd == 0.0 {
        return Err(Error::Degenerate("zero variance, cannot standardize".into()));
    }
    Ok(v.iter().map(|x| (x - mean) / sd).collect())
}

/// Simple OLS `y = b0 + b1 x` with classical standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub n_obs: usize,
    pub beta0: f64,
    pub beta1: f64,
    pub se0: f64,
    pub se1: f64,
    pub t0: f64,
    pub t1: f64,
    pub p0: f64,
    pub p1: f64,
    pub r_squared: f64,
    /// Residuals vanish, so t statistics are infinite.
    pub degenerate: bool,
}

pub fn ols_fit(y: &[f64], x: &[f64]) -> Result<OlsFit> {
    if y.len() != x.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: x.len(),
        });
    }
    let n = y.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!("regression needs at least 3 observations, got {n}")));
    }
    let nf = n as f64;
    let xm = x.iter().sum::<f64>() / nf;
    let ym = y.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (xi, yi) in x.iter().zip(y) {
        let (dx, dy) = (xi - xm, yi - ym);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if !(sxx > 0.0) || !(syy > 0.0) {
        return Err(Error::Degenerate("regressor or response has zero variance".into()));
    }
    let beta1 = sxy / sxx;
    let beta0 = ym - beta1 * xm;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| (yi - beta0 - beta1 * xi).powi(2))
        .sum();
    let r_squared = (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0);
    let df = nf - 2.0;

    if sse <= 1e-20 * syy {
        log::warn!("perfect fit over {n} observations; t statistics are infinite");
        let t0 = if beta0.abs() <= 1e-12 * (1.0 + ym.abs()) {
            0.0
        } else {
            f64::INFINITY.copysign(beta0)
        };
        return Ok(OlsFit {
            n_obs: n,
            beta0,
            beta1,
            se0: 0.0,
            se1: 0.0,
            t0,
            t1: f64::INFINITY.copysign(beta1),
            p0: if t0 == 0.0 { 1.0 } else { 0.0 },
            p1: 0.0,
            r_squared,
            degenerate: true,
        });
    }
    let s2 = sse / df;
    let se1 = (s2 / sxx).sqrt();
    let se0 = (s2 * (1.0 / nf + xm * xm / sxx)).sqrt();
    let (t0, t1) = (beta0 / se0, beta1 / se1);
    Ok(OlsFit {
        n_obs: n,
        beta0,
        beta1,
        se0,
        se1,
        t0,
        t1,
        p0: students_t_sf(t0, df),
        p1: students_t_sf(t1, df),
        r_squared,
        degenerate: false,
    })
}

/// Two-sided tail probability `P(|T| >= |t|)` for Student's t with `df`
/// degrees of freedom.
pub fn students_t_sf(t: f64, df: f64) -> f64 {
    if t.is_nan() || !(df > 0.0) {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let t2 = t * t;
    // x and 1 - x are both formed directly to avoid cancellation
    let x = df / (df + t2);
    let y = t2 / (df + t2);
    regularized_incomplete_beta(0.5 * df, 0.5, x, y)
}

/// Lanczos approximation (g = 7, 9 terms) to `ln Gamma(z)` for `z > 0`.
pub fn ln_gamma(z: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if z < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * z).sin()).ln() - ln_gamma(1.0 - z);
    }
    let z = z - 1.0;
    let mut acc = COEF[0];
    for (k, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (z + k as f64);
    }
    let t = z + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
}

/// `I_x(a, b)`, given both `x` and `y = 1 - x`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64, y: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if y <= 0.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * y.ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        (ln_front.exp() * beta_continued_fraction(a, b, x) / a).clamp(0.0, 1.0)
    } else {
        (1.0 - ln_front.exp() * beta_continued_fraction(b, a, y) / b).clamp(0.0, 1.0)
    }
}

/// Modified Lentz evaluation of the incomplete beta continued fraction.
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub metric: SizeMetric,
    /// Sectors kept after dropping those without the metric.
    pub sectors: Vec<SectorId>,
    #[serde(flatten)]
    pub fit: OlsFit,
}

/// Regress standardized centrality on a standardized size metric.
///
/// Sectors lacking the metric are dropped before standardizing.
pub fn regress_on_size(
    report: &CentralityReport,
    fundamentals: &[SectorFundamentals],
    metric: SizeMetric,
) -> Result<RegressionFit> {
    let mut sectors = Vec::new();
    let mut y = Vec::new();
    let mut x = Vec::new();
    for (sector, c) in report.sectors.iter().zip(&report.x) {
        let value = fundamentals
            .iter()
            .find(|f| f.sector.code() == sector.code())
            .and_then(|f| f.metric(metric));
        if let Some(v) = value {
            sectors.push(sector.clone());
            y.push(*c);
            x.push(v);
        }
    }
    if sectors.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "{metric}: only {} sectors report this metric, need at least 3",
            sectors.len()
        )));
    }
    let fit = ols_fit(&standardize(&y)?, &standardize(&x)?)?;
    Ok(RegressionFit { metric, sectors, fit })
}

/// One line of the regression table. `fit` is `None` for a skipped metric.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionRow {
    pub country: String,
    pub metric: SizeMetric,
    pub period: String,
    pub fit: Option<RegressionFit>,
}

pub fn write_regression_csv<W: Write>(rows: &[RegressionRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["country", "metric", "period", "beta0", "beta1", "t1", "p1", "r_squared", "n_obs"])
        .map_err(csv_error)?;
    for row in rows {
        let mut record = vec![row.country.clone(), row.metric.as_str().to_string(), row.period.clone()];
        match &row.fit {
            Some(f) => {
                let f = &f.fit;
                record.extend(
                    [f.beta0, f.beta1, f.t1, f.p1, f.r_squared]
                        .iter()
                        .map(|v| format!("{v:?}")),
                );
                record.push(f.n_obs.to_string());
            }
            None => record.extend(std::iter::repeat_n(String::new(), 6)),
        }
        w.write_record(&record).map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))
}
