//! Eigenvector centrality and the binary core/periphery split.
//!
//! The Perron vector is found by power iteration on `A - sI`, where `s` is the
//! Gershgorin lower bound `min_i (a_ii - sum_{j != i} a_ij)`. The shifted
//! matrix is still nonnegative, has the same eigenvectors and a nonnegative
//! spectrum, so the iteration cannot oscillate. For the near-identity matrices
//! produced by `rho^32` the shift also removes the bulk of the diagonal, which
//! otherwise pins the convergence ratio close to one.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CorrelationNet, SectorId};
use crate::network::{absolute_matrix, elementwise_power};

pub const STEP_TOLERANCE: f64 = 1e-12;
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 100_000;
/// Default threshold percentage.
pub const DEFAULT_N_PCT: f64 = 2.0;

/// Relative dispersion below which a vector counts as uniform.
const UNIFORM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair {
    /// Perron vector, positive and summing to one.
    pub x: Vec<f64>,
    pub lambda: f64,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

/// Dominant eigenpair of a nonnegative symmetric matrix.
pub fn eigenvector_centrality(a: &DMatrix<f64>) -> Result<Eigenpair> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::InvalidInput(format!(
            "centrality needs a non-empty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let scale = a.amax();
    for i in 0..n {
        for j in 0..n {
            let v = a[(i, j)];
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidInput(format!("entry ({i},{j}) = {v} is not a finite nonnegative number")));
            }
            if (v - a[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::InvalidInput(format!("matrix is not symmetric at ({i},{j})")));
            }
        }
    }
    if scale == 0.0 {
        return Err(Error::Reducible { components: n });
    }

    let components = off_diagonal_components(a);
    if components > 1 {
        let diag = a.diagonal();
        let no_links = (0..n).all(|i| (0..n).all(|j| i == j || a[(i, j)] == 0.0));
        if no_links && diag.iter().all(|d| *d == diag[0]) {
            return Ok(Eigenpair {
                x: vec![1.0 / n as f64; n],
                lambda: diag[0],
                iterations: 0,
                warnings: vec![format!(
                    "matrix is a multiple of the identity; dominant eigenvalue has multiplicity {n}, returning uniform centrality"
                )],
            });
        }
        return Err(Error::Reducible { components });
    }
    if n == 1 {
        return Ok(Eigenpair {
            x: vec![1.0],
            lambda: a[(0, 0)],
            iterations: 0,
            warnings: Vec::new(),
        });
    }

    let shift = (0..n)
        .map(|i| a[(i, i)] - (0..n).filter(|&j| j != i).map(|j| a[(i, j)]).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    let shifted = {
        let mut m = a.clone();
        for i in 0..n {
            m[(i, i)] -= shift;
        }
        m
    };

    let mut x = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for iteration in 1..=MAX_ITERATIONS {
        mat_vec(&shifted, &x, &mut next);
        let total: f64 = next.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Numerical(format!("power iteration produced norm {total}")));
        }
        next.iter_mut().for_each(|v| *v /= total);
        let step = x
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut x, &mut next);
        if step <= STEP_TOLERANCE {
            let lambda = rayleigh_quotient(a, &x);
            if residual(a, &x, lambda) <= RESIDUAL_TOLERANCE * lambda {
                if x.iter().any(|v| *v <= 0.0) {
                    return Err(Error::Numerical("Perron vector has a non-positive entry".into()));
                }
                return Ok(Eigenpair {
                    x,
                    lambda,
                    iterations: iteration,
                    warnings: Vec::new(),
                });
            }
        }
    }
    Err(Error::Convergence {
        iterations: MAX_ITERATIONS,
    })
}

fn mat_vec(a: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = (0..n).map(|j| a[(i, j)] * x[j]).sum();
    }
}

fn rayleigh_quotient(a: &DMatrix<f64>, x: &[f64]) -> f64 {
    let mut ax = vec![0.0; x.len()];
    mat_vec(a, x, &mut ax);
    let num: f64 = x.iter().zip(&ax).map(|(u, v)| u * v).sum();
    let den: f64 = x.iter().map(|u| u * u).sum();
    num / den
}

/// `max_i |(Ax)_i - lambda x_i|`.
pub fn residual(a: &DMatrix<f64>, x: &[f64], lambda: f64) -> f64 {
    let mut ax = vec![0.0; x.len()];
    mat_vec(a, x, &mut ax);
    ax.iter()
        .zip(x)
        .map(|(v, u)| (v - lambda * u).abs())
        .fold(0.0, f64::max)
}

/// Number of connected blocks in the graph of positive off-diagonal entries.
fn off_diagonal_components(a: &DMatrix<f64>) -> usize {
    let n = a.nrows();
    let mut seen = vec![false; n];
    let mut components = 0;
    for start in 0..n {
        if seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if !seen[j] && a[(i, j)] > 0.0 {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    components
}

/// How a threshold percentage becomes a threshold value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaFormula {
    /// `theta = (n/100) * std(v)`, i.e. `(n/100) * CV * mean`.
    #[default]
    StdScaled,
    /// `theta = (n/100) * std(v) / mean(v)`.
    RawCv,
}

impl ThetaFormula {
    pub fn as_str(self) -> &'static str {
        match self {
            ThetaFormula::StdScaled => "std_scaled",
            ThetaFormula::RawCv => "raw_cv",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            ThetaFormula::StdScaled => "theta = (n/100) * std(v)",
            ThetaFormula::RawCv => "theta = (n/100) * std(v) / mean(v)",
        }
    }
}

/// Binary labels from a threshold on a nonnegative vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub flags: Vec<bool>,
    pub theta: f64,
    /// Set when the vector has no dispersion. All flags are then false.
    pub degenerate: bool,
}

/// Population mean and standard deviation.
pub(crate) fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Labels `v_i > theta`, with theta from `formula` at `n_pct` percent.
///
/// A vector with no dispersion gets all-false flags, `degenerate = true` and
/// a logged warning instead of an error.
pub fn threshold_flags(v: &[f64], n_pct: f64, formula: ThetaFormula) -> Result<Threshold> {
    if v.is_empty() {
        return Err(Error::EmptyInput("threshold on an empty vector"));
    }
    if !(n_pct > 0.0 && n_pct.is_finite()) {
        return Err(Error::InvalidInput(format!("threshold percentage must be positive, got {n_pct}")));
    }
    if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidInput("threshold needs finite nonnegative values".into()));
    }
    let (mean, std) = mean_std(v);
    if mean <= 0.0 || std <= UNIFORM_TOLERANCE * mean {
        log::warn!("zero dispersion in a vector of {} values; everything labelled 0", v.len());
        return Ok(Threshold {
            flags: vec![false; v.len()],
            theta: 0.0,
            degenerate: true,
        });
    }
    let theta = match formula {
        ThetaFormula::StdScaled => n_pct / 100.0 * std,
        ThetaFormula::RawCv => n_pct / 100.0 * std / mean,
    };
    Ok(Threshold {
        flags: v.iter().map(|x| *x > theta).collect(),
        theta,
        degenerate: false,
    })
}

/// Core labels for a centrality vector.
pub fn core_flags(x: &[f64], n_pct: f64, formula: ThetaFormula) -> Result<Threshold> {
    threshold_flags(x, n_pct, formula)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "power", rename_all = "snake_case")]
pub enum MatrixKind {
    AbsRho,
    RhoPower(u32),
}

impl fmt::Display for MatrixKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixKind::AbsRho => f.write_str("|rho|"),
            MatrixKind::RhoPower(c) => write!(f, "rho^{c}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralityReport {
    pub sectors: Vec<SectorId>,
    pub x: Vec<f64>,
    pub lambda_m: f64,
    pub matrix_kind: MatrixKind,
    pub n_pct: f64,
    pub theta_e: f64,
    pub theta_formula: ThetaFormula,
    pub core: Vec<bool>,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

impl CentralityReport {
    pub fn core_codes(&self) -> Vec<&str> {
        self.sectors
            .iter()
            .zip(&self.core)
            .filter(|(_, c)| **c)
            .map(|(s, _)| s.code())
            .collect()
    }
}

/// Centrality of `|rho|` or `rho^c` together with its core labels.
pub fn centrality_report(
    net: &CorrelationNet,
    kind: MatrixKind,
    n_pct: f64,
    formula: ThetaFormula,
) -> Result<CentralityReport> {
    let matrix = match kind {
        MatrixKind::AbsRho => absolute_matrix(net),
        MatrixKind::RhoPower(c) => elementwise_power(net, c)?,
    };
    let pair = eigenvector_centrality(&matrix)?;
    let split = core_flags(&pair.x, n_pct, formula)?;
    let mut warnings = pair.warnings;
    if split.degenerate {
        warnings.push("centrality has no dispersion; every sector labelled periphery".into());
    }
    Ok(CentralityReport {
        sectors: net.sectors().to_vec(),
        x: pair.x,
        lambda_m: pair.lambda,
        matrix_kind: kind,
        n_pct,
        theta_e: split.theta,
        theta_formula: formula,
        core: split.flags,
        iterations: pair.iterations,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn all_ones_matrix() {
        let pair = eigenvector_centrality(&DMatrix::from_element(4, 4, 1.0)).unwrap();
        for v in &pair.x {
            assert!((v - 0.25).abs() < 1e-15);
        }
        assert!((pair.lambda - 4.0).abs() < 1e-12);
    }

    #[test]
    fn identity_is_uniform_with_warning() {
        let pair = eigenvector_centrality(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(pair.x, vec![1.0 / 3.0; 3]);
        assert_eq!(pair.lambda, 1.0);
        assert_eq!(pair.warnings.len(), 1);
    }

    #[test]
    fn disconnected_blocks_are_reducible() {
        let a = DMatrix::from_row_slice(4, 4, &[
            1.0, 0.5, 0.0, 0.0, //
            0.5, 1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 0.2, //
            0.0, 0.0, 0.2, 1.0,
        ]);
        assert!(matches!(eigenvector_centrality(&a), Err(Error::Reducible { components: 2 })));
        let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0]));
        assert!(matches!(eigenvector_centrality(&diag), Err(Error::Reducible { .. })));
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0]);
        assert!(matches!(eigenvector_centrality(&bad), Err(Error::InvalidInput(_))));
    }

    /// Eigenvalues of a symmetric 3x3 matrix from its characteristic
    /// polynomial (trigonometric form of the cubic roots).
    fn cubic_eigenvalues(a: &DMatrix<f64>) -> [f64; 3] {
        let p1 = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
        let q = a.trace() / 3.0;
        let p2 = (a[(0, 0)] - q).powi(2) + (a[(1, 1)] - q).powi(2) + (a[(2, 2)] - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let b = (a - DMatrix::identity(3, 3) * q) / p;
        let r = (b.determinant() / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        [e1, 3.0 * q - e1 - e3, e3]
    }

    #[test]
    fn three_by_three_matches_characteristic_polynomial() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.1, 0.5, 1.0, 0.2, 0.1, 0.2, 1.0]);
        let lambda = cubic_eigenvalues(&a)[0];
        // eigenvector: cross product of two rows of (A - lambda I)
        let m = &a - DMatrix::identity(3, 3) * lambda;
        let (r0, r1) = (m.row(0), m.row(1));
        let v = [
            r0[1] * r1[2] - r0[2] * r1[1],
            r0[2] * r1[0] - r0[0] * r1[2],
            r0[0] * r1[1] - r0[1] * r1[0],
        ];
        let s: f64 = v.iter().sum();
        let expected: Vec<f64> = v.iter().map(|c| c / s).collect();

        let pair = eigenvector_centrality(&a).unwrap();
        assert!((pair.lambda - lambda).abs() <= 1e-9, "{} vs {}", pair.lambda, lambda);
        for (got, want) in pair.x.iter().zip(&expected) {
            assert!((got - want).abs() <= 1e-9);
        }
        assert!(residual(&a, &pair.x, pair.lambda) <= 1e-10 * pair.lambda);
    }

    #[test]
    fn sharpened_near_identity_matrix_converges() {
        // rho^32 of a 6-sector net with one tight cluster: mostly identity
        let rho: [f64; 5] = [0.97, 0.95, 0.9, 0.4, 0.3];
        let n = 6;
        let mut a = DMatrix::identity(n, n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let r = rho[i.min(4)] * rho[j.min(4)];
                    a[(i, j)] = r.powi(32);
                }
            }
        }
        let pair = eigenvector_centrality(&a).unwrap();
        assert!(pair.iterations < MAX_ITERATIONS);
        assert!(residual(&a, &pair.x, pair.lambda) <= 1e-10 * pair.lambda);
        assert!(pair.x[0] > pair.x[4]);
    }

    #[test]
    fn threshold_uniform_vector_is_all_periphery() {
        let t = core_flags(&[0.1; 10], 2.0, ThetaFormula::StdScaled).unwrap();
        assert!(t.degenerate);
        assert_eq!(t.flags, vec![false; 10]);
    }

    #[test]
    fn threshold_dominant_sector() {
        // population std of (0.97, 0.01, 0.01, 0.01) is sqrt(0.1728) = 0.41569
        let x = [0.97, 0.01, 0.01, 0.01];
        let std = 0.1728f64.sqrt();

        let t = core_flags(&x, 2.0, ThetaFormula::StdScaled).unwrap();
        assert!((t.theta - 0.02 * std).abs() < 1e-15);
        // theta = 0.0083 sits below 0.01, so every sector clears it
        assert_eq!(t.flags, vec![true, true, true, true]);

        let t = core_flags(&x, 2.0, ThetaFormula::RawCv).unwrap();
        assert!((t.theta - 0.02 * std / 0.25).abs() < 1e-15);
        assert_eq!(t.flags, vec![true, false, false, false]);
    }

    #[test]
    fn threshold_rejects_bad_input() {
        assert!(core_flags(&[], 2.0, ThetaFormula::StdScaled).is_err());
        assert!(core_flags(&[0.5, 0.5], 0.0, ThetaFormula::StdScaled).is_err());
        assert!(core_flags(&[0.5, -0.5], 2.0, ThetaFormula::StdScaled).is_err());
    }

    #[test]
    fn equality_at_threshold_is_periphery() {
        // std of (0, 2) is 1, so theta = 1 at n = 100
        let t = threshold_flags(&[0.0, 2.0, 1.0, 1.0], 100.0 / 0.5f64.sqrt(), ThetaFormula::StdScaled).unwrap();
        let t2 = threshold_flags(&[0.0, 2.0], 100.0, ThetaFormula::StdScaled).unwrap();
        assert_eq!(t2.theta, 1.0);
        assert_eq!(t2.flags, vec![false, true]);
        assert!(!t.flags[0] && t.flags[1]);
    }

    fn random_nonneg(n: usize, seed: u64) -> DMatrix<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v: f64 = rng.random_range(0.01..1.0);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        a
    }

    proptest! {
        #[test]
        fn scaling_the_matrix_scales_lambda_only(seed in any::<u64>(), n in 2usize..7, k in 0.01f64..100.0) {
            let a = random_nonneg(n, seed);
            let base = eigenvector_centrality(&a).unwrap();
            let scaled = eigenvector_centrality(&(&a * k)).unwrap();
            prop_assert!((scaled.lambda - k * base.lambda).abs() <= 1e-9 * k * base.lambda);
            for (u, v) in base.x.iter().zip(&scaled.x) {
                prop_assert!((u - v).abs() <= 1e-10);
            }
            let f1 = core_flags(&base.x, 2.0, ThetaFormula::StdScaled).unwrap();
            let f2 = core_flags(&scaled.x, 2.0, ThetaFormula::StdScaled).unwrap();
            prop_assert_eq!(f1.flags, f2.flags);
        }

        #[test]
        fn centrality_invariants(seed in any::<u64>(), n in 1usize..9) {
            let a = random_nonneg(n, seed);
            let pair = eigenvector_centrality(&a).unwrap();
            prop_assert!((pair.x.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(pair.x.iter().all(|v| *v > 0.0));
            prop_assert!(residual(&a, &pair.x, pair.lambda) <= RESIDUAL_TOLERANCE * pair.lambda);
        }
    }

    /// Sharpening with a growing power should not spread centrality out when
    /// one off-diagonal link dominates. Logged rather than asserted.
    #[test]
    fn concentration_under_growing_power_is_logged() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut violations = 0;
        for _ in 0..200 {
            let n = 5;
            let mut rho = DMatrix::identity(n, n);
            for i in 0..n {
                for j in (i + 1)..n {
                    let v = rng.random_range(0.05..0.8);
                    rho[(i, j)] = v;
                    rho[(j, i)] = v;
                }
            }
            let codes: Vec<String> = (0..n).map(|i| format!("S{i}")).collect();
            let net = CorrelationNet::from_rho(crate::model::sectors_from_codes(&codes).unwrap(), rho).unwrap();
            let mut prev = eigenvector_centrality(&absolute_matrix(&net))
                .unwrap()
                .x
                .into_iter()
                .fold(0.0, f64::max);
            for c in [2, 4, 8, 16, 32] {
                let m = elementwise_power(&net, c).unwrap();
                let top = eigenvector_centrality(&m).unwrap().x.into_iter().fold(0.0, f64::max);
                if top + 1e-12 < prev {
                    violations += 1;
                }
                prev = top;
            }
        }
        eprintln!("max-centrality concentration violations: {violations} / 1000 steps");
    }
}
