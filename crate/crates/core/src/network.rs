//! Correlation matrix, distance transform and the nonnegative matrices fed to
//! the centrality computation.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{CorrelationNet, PanelData, PanelKind, SectorId};

/// Correlations further than this outside [-1, 1] are treated as a bug, not noise.
const CLAMP_SLACK: f64 = 1e-9;

/// Default exponent for the sharpened correlation matrix.
pub const DEFAULT_POWER: u32 = 32;

/// `d = sqrt(2 (1 - rho))`, mapping 1 to 0 and -1 to 2.
pub fn correlation_distance(rho: f64) -> f64 {
    (2.0 * (1.0 - rho)).max(0.0).sqrt()
}

impl CorrelationNet {
    /// Builds the network from a correlation matrix.
    ///
    /// The matrix must be square, symmetric to within 1e-12 and have entries
    /// within `1e-9` of [-1, 1]. Entries are clamped, the diagonal is forced to
    /// exactly 1 and the distance matrix is derived.
    pub fn from_rho(sectors: Vec<SectorId>, rho: DMatrix<f64>) -> Result<Self> {
        let n = sectors.len();
        if rho.shape() != (n, n) {
            return Err(Error::InvalidInput(format!(
                "correlation matrix is {}x{} for {n} sectors",
                rho.nrows(),
                rho.ncols()
            )));
        }
        let mut clean = DMatrix::identity(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (rho[(i, j)], rho[(j, i)]);
                if !a.is_finite() || !b.is_finite() {
                    return Err(Error::InvalidInput(format!("non-finite correlation at ({i},{j})")));
                }
                if (a - b).abs() > 1e-12 {
                    return Err(Error::InvalidInput(format!("correlation matrix not symmetric at ({i},{j})")));
                }
                if a.abs() > 1.0 + CLAMP_SLACK {
                    return Err(Error::Numerical(format!(
                        "correlation {a} at ({i},{j}) is outside [-1, 1]"
                    )));
                }
                let v = a.clamp(-1.0, 1.0);
                clean[(i, j)] = v;
                clean[(j, i)] = v;
            }
        }
        let dist = clean.map(correlation_distance);
        Ok(CorrelationNet {
            sectors,
            rho: clean,
            dist,
        })
    }
}

/// Equal-time Pearson correlation of the return series, with population
/// (1/T) moments.
pub fn pearson_correlation(returns: &PanelData) -> Result<CorrelationNet> {
    if returns.kind() != PanelKind::LogReturns {
        return Err(Error::InvalidInput("pearson_correlation expects log-returns".into()));
    }
    let t = returns.n_dates();
    if t < 3 {
        return Err(Error::InvalidInput(format!("need at least 3 return observations, have {t}")));
    }
    let n = returns.n_sectors();
    let centered = centered_columns(returns.values());
    let var: Vec<f64> = (0..n).map(|i| centered_dot(&centered, i, i) / t as f64).collect();
    for (i, sector) in returns.sectors().iter().enumerate() {
        let col = returns.values().column(i);
        if var[i] <= 0.0 || col.iter().all(|v| *v == col[0]) {
            return Err(Error::DegenerateSeries {
                sector: sector.code().to_string(),
            });
        }
    }

    let mut rho = DMatrix::identity(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let cov = centered_dot(&centered, i, j) / t as f64;
            let r = cov / (var[i] * var[j]).sqrt();
            rho[(i, j)] = r;
            rho[(j, i)] = r;
        }
    }
    CorrelationNet::from_rho(returns.sectors().to_vec(), rho)
}

/// Subtracts each column's mean.
pub(crate) fn centered_columns(values: &DMatrix<f64>) -> DMatrix<f64> {
    let t = values.nrows() as f64;
    let mut out = values.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.iter().sum::<f64>() / t;
        col.iter_mut().for_each(|v| *v -= mean);
    }
    out
}

/// Sum of products of two centered columns, accumulated in row order.
pub(crate) fn centered_dot(centered: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    centered
        .column(i)
        .iter()
        .zip(centered.column(j).iter())
        .map(|(a, b)| a * b)
        .sum()
}

/// Elementwise `rho^c` for a positive even `c`.
pub fn elementwise_power(net: &CorrelationNet, c: u32) -> Result<DMatrix<f64>> {
    if c == 0 || c % 2 != 0 {
        return Err(Error::InvalidExponent(c));
    }
    let exp = i32::try_from(c).map_err(|_| Error::InvalidExponent(c))?;
    Ok(net.rho.map(|r| r.powi(exp)))
}

/// Elementwise `|rho|`.
pub fn absolute_matrix(net: &CorrelationNet) -> DMatrix<f64> {
    net.rho.abs()
}

/// Writes a labelled square matrix: header `,CODE1,...`, then one row per
/// sector led by its code.
pub fn write_matrix_csv<W: Write>(sectors: &[SectorId], m: &DMatrix<f64>, writer: W) -> Result<()> {
    let to_err = |e: csv::Error| Error::Parse {
        line: 0,
        message: e.to_string(),
    };
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec![String::new()];
    header.extend(sectors.iter().map(|s| s.code().to_string()));
    wtr.write_record(&header).map_err(to_err)?;
    for (i, s) in sectors.iter().enumerate() {
        let mut row = vec![s.code().to_string()];
        row.extend(m.row(i).iter().map(|v| v.to_string()));
        wtr.write_record(&row).map_err(to_err)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Reads a matrix written by [`write_matrix_csv`].
pub fn read_matrix_csv<R: Read>(reader: R) -> Result<(Vec<SectorId>, DMatrix<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let to_err = |e: csv::Error| Error::Parse {
        line: e.position().map(|p| p.line()).unwrap_or(0),
        message: e.to_string(),
    };
    let header = rdr.headers().map_err(to_err)?.clone();
    let sectors = header
        .iter()
        .skip(1)
        .map(SectorId::new)
        .collect::<Result<Vec<_>>>()?;
    let n = sectors.len();
    let mut data = Vec::with_capacity(n * n);
    let mut rows = 0;
    for record in rdr.records() {
        let record = record.map_err(to_err)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record[0].trim() != sectors.get(rows).map(SectorId::code).unwrap_or("") {
            return Err(Error::Schema(format!(
                "matrix row {} is labelled {:?}, expected the header order",
                rows + 1,
                &record[0]
            )));
        }
        for (k, cell) in record.iter().skip(1).enumerate() {
            let v = cell.trim().parse::<f64>().map_err(|_| Error::Value {
                line,
                column: sectors[k].code().to_string(),
                value: cell.to_string(),
            })?;
            data.push(v);
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::Schema(format!("matrix has {rows} rows for {n} columns")));
    }
    Ok((sectors, DMatrix::from_row_slice(n, n, &data)))
}
