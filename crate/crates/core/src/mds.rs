//! Two-dimensional metric MDS by stress majorization.
//!
//! Raw stress `sum_{i<j} (|y_i - y_j| - d_ij)^2` is minimized with Guttman
//! transforms starting from classical scaling.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::csv_error;
use crate::model::{CorrelationNet, SectorId};

pub const DIMENSION: usize = 2;
pub const STRESS_EXPONENT: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MdsOptions {
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for MdsOptions {
    fn default() -> Self {
        MdsOptions {
            seed: 0,
            max_iter: 1000,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initialization {
    Classical,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingResult {
    pub sectors: Vec<SectorId>,
    /// One `[x, y]` pair per sector.
    pub coords: Vec<[f64; 2]>,
    pub stress: f64,
    pub iterations: usize,
    pub converged: bool,
    pub init: Initialization,
    pub stress_exponent: u32,
    pub dimension: usize,
    /// Stress before the first update and after every update.
    pub stress_trace: Vec<f64>,
    pub warnings: Vec<String>,
}

impl EmbeddingResult {
    pub fn embedded_distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.coords[i], self.coords[j]);
        (a[0] - b[0]).hypot(a[1] - b[1])
    }
}

pub fn mds_embed(net: &CorrelationNet, opts: &MdsOptions) -> Result<EmbeddingResult> {
    mds_embed_distances(net.sectors().to_vec(), net.dist(), opts)
}

pub fn mds_embed_distances(sectors: Vec<SectorId>, dist: &DMatrix<f64>, opts: &MdsOptions) -> Result<EmbeddingResult> {
    let n = sectors.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!("embedding needs at least 3 sectors, got {n}")));
    }
    if dist.nrows() != n || dist.ncols() != n {
        return Err(Error::InvalidInput(format!(
            "distance matrix is {}x{} for {n} sectors",
            dist.nrows(),
            dist.ncols()
        )));
    }
    if dist.iter().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(Error::InvalidInput("distances must be finite and nonnegative".into()));
    }
    if !(opts.tol >= 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be nonnegative, got {}", opts.tol)));
    }

    let (mut x, init) = match classical_scaling(dist) {
        Some(x) => (x, Initialization::Classical),
        None => (random_start(n, opts.seed), Initialization::Random),
    };
    let scale: f64 = dist.iter().map(|d| d * d).sum::<f64>() / 2.0;
    let negligible = 1e-24 * scale.max(f64::MIN_POSITIVE);

    let mut sigma = stress(&x, dist);
    let mut trace = vec![sigma];
    let mut converged = sigma <= negligible;
    let mut iterations = 0;
    while !converged && iterations < opts.max_iter {
        let next = guttman_transform(&x, dist);
        let next_sigma = stress(&next, dist);
        iterations += 1;
        trace.push(next_sigma);
        let decrease = (sigma - next_sigma) / sigma;
        x = next;
        sigma = next_sigma;
        converged = sigma <= negligible || decrease < opts.tol;
    }

    let mut warnings = Vec::new();
    if init == Initialization::Random {
        warnings.push("classical scaling has rank below 2; started from seeded random coordinates".into());
    }
    if !converged {
        log::warn!("stress majorization stopped at max_iter = {}", opts.max_iter);
        warnings.push(format!("reached max_iter = {} before the stress change fell below tol", opts.max_iter));
    }
    Ok(EmbeddingResult {
        sectors,
        coords: (0..n).map(|i| [x[(i, 0)], x[(i, 1)]]).collect(),
        stress: sigma,
        iterations,
        converged,
        init,
        stress_exponent: STRESS_EXPONENT,
        dimension: DIMENSION,
        stress_trace: trace,
        warnings,
    })
}

/// Top two principal coordinates of `-1/2 J D^2 J`, or `None` below rank 2.
fn classical_scaling(dist: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = dist.nrows();
    let sq = dist.map(|d| d * d);
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + grand));
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let (l1, l2) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    if !(l1 > 0.0) || l2 <= 1e-12 * l1 {
        return None;
    }
    let mut x = DMatrix::zeros(n, DIMENSION);
    for (k, &idx) in order.iter().take(DIMENSION).enumerate() {
        let v = eig.eigenvectors.column(idx);
        // sign fixed so the largest-magnitude entry is positive
        let pivot = (0..n).fold(0, |best, i| if v[i].abs() > v[best].abs() { i } else { best });
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        let root = eig.eigenvalues[idx].sqrt();
        for i in 0..n {
            x[(i, k)] = sign * v[i] * root;
        }
    }
    Some(x)
}

fn random_start(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, DIMENSION, |_, _| rng.random_range(-1.0..=1.0))
}

fn pair_distance(x: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    (x[(i, 0)] - x[(j, 0)]).hypot(x[(i, 1)] - x[(j, 1)])
}

/// Raw stress of a configuration.
pub fn stress(x: &DMatrix<f64>, dist: &DMatrix<f64>) -> f64 {
    let n = x.nrows();
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            total += (pair_distance(x, i, j) - dist[(i, j)]).powi(2);
        }
    }
    total
}

/// `X <- (1/N) B(X) X` for unit weights.
fn guttman_transform(x: &DMatrix<f64>, dist: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut b = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = pair_distance(x, i, j);
            if dx > 0.0 {
                let v = -dist[(i, j)] / dx;
                b[(i, j)] = v;
                b[(j, i)] = v;
            }
        }
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| b[(i, j)]).sum();
        b[(i, i)] = -off;
    }
    (b * x) / n as f64
}

pub fn write_coords_csv<W: Write>(result: &EmbeddingResult, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["sector", "x", "y"]).map_err(csv_error)?;
    for (s, c) in result.sectors.iter().zip(&result.coords) {
        w.write_record([s.code().to_string(), format!("{:?}", c[0]), format!("{:?}", c[1])])
            .map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))
}
