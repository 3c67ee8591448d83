//! Long-only minimum-variance portfolios.
//!
//! Solves `min w'Sw - theta R'w` subject to `w >= 0`, `sum w = 1` with a
//! primal active-set method. Each step solves the equality-constrained KKT
//! system on the current free set.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::centrality::{threshold_flags, ThetaFormula};
use crate::error::{Error, Result};
use crate::model::{PanelData, PanelKind, SectorId};
use crate::network::{centered_columns, centered_dot};

/// Largest tolerated KKT violation relative to the objective scale.
pub const KKT_TOLERANCE: f64 = 1e-8;

/// Population (1/T) covariance of the return columns, two-pass.
pub fn covariance(returns: &PanelData) -> Result<DMatrix<f64>> {
    if returns.kind() != PanelKind::LogReturns {
        return Err(Error::InvalidInput("covariance expects log-returns".into()));
    }
    let t = returns.n_dates();
    if t < 2 {
        return Err(Error::InvalidInput(format!("covariance needs at least 2 observations, have {t}")));
    }
    let n = returns.n_sectors();
    let centered = centered_columns(returns.values());
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = centered_dot(&centered, i, j) / t as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok(cov)
}

/// Sample mean of each return column.
pub fn mean_returns(returns: &PanelData) -> Vec<f64> {
    let t = returns.n_dates() as f64;
    returns.values().column_iter().map(|c| c.sum() / t).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub weights: Vec<f64>,
    /// `w'Sw` on the unregularized matrix.
    pub variance: f64,
    pub objective: f64,
    /// Multiplier of the budget constraint.
    pub kkt_multiplier: f64,
    pub kkt_violation: f64,
    /// Ridge added to the diagonal, zero when none was needed.
    pub ridge_epsilon: f64,
    pub iterations: usize,
}

pub fn min_variance_weights(sigma: &DMatrix<f64>, theta: f64, expected: &[f64]) -> Result<QpSolution> {
    let n = sigma.nrows();
    if n == 0 || sigma.ncols() != n {
        return Err(Error::InvalidInput(format!(
            "covariance must be non-empty and square, got {}x{}",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    if expected.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: expected.len(),
        });
    }
    if sigma.iter().chain(expected).any(|v| !v.is_finite()) || !theta.is_finite() {
        return Err(Error::InvalidInput("portfolio inputs must be finite".into()));
    }
    let scale = sigma.amax();
    for i in 0..n {
        for j in 0..i {
            if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::InvalidInput(format!("covariance is not symmetric at ({i},{j})")));
            }
        }
    }
    let trace = sigma.trace();
    if !(trace > 0.0) {
        return Err(Error::Numerical("covariance has zero trace".into()));
    }
    let per_asset = trace / n as f64;
    let lambda_min = SymmetricEigen::new(sigma.clone()).eigenvalues.min();
    if lambda_min < -1e-10 * trace {
        return Err(Error::Numerical(format!("covariance is not positive semidefinite (eigenvalue {lambda_min:e})")));
    }
    let ridge_epsilon = if lambda_min < 1e-12 * per_asset {
        1e-10 * per_asset
    } else {
        0.0
    };
    let mut q = sigma.clone();
    for i in 0..n {
        q[(i, i)] += ridge_epsilon;
    }
    let c: Vec<f64> = expected.iter().map(|r| theta * r).collect();
    let gradient_scale = 2.0 * per_asset + c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * gradient_scale;

    let mut w = vec![1.0 / n as f64; n];
    let mut free = vec![true; n];
    let max_iterations = 10 * n + 100;
    for iteration in 1..=max_iterations {
        let idx: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
        let (target, mu) = solve_equality_qp(&q, &c, &idx)?;
        let blocking = idx
            .iter()
            .zip(&target)
            .filter(|(_, t)| **t < 0.0)
            .map(|(&i, &t)| (i, w[i] / (w[i] - t)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((block, alpha)) = blocking {
            for (&i, &t) in idx.iter().zip(&target) {
                w[i] += alpha * (t - w[i]);
            }
            w[block] = 0.0;
            free[block] = false;
            for &i in &idx {
                if w[i] <= 0.0 {
                    w[i] = 0.0;
                    free[i] = false;
                }
            }
            continue;
        }
        for (&i, &t) in idx.iter().zip(&target) {
            w[i] = t;
        }
        let g = gradient(&q, &c, &w);
        let release = (0..n)
            .filter(|&i| !free[i])
            .map(|i| (i, g[i] - mu))
            .filter(|(_, lam)| *lam < -tol)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match release {
            Some((i, _)) => free[i] = true,
            None => {
                let total: f64 = w.iter().sum();
                w.iter_mut().for_each(|v| *v /= total);
                let g = gradient(&q, &c, &w);
                let kkt_violation = (0..n)
                    .map(|i| if w[i] > 0.0 { (g[i] - mu).abs() } else { (mu - g[i]).max(0.0) })
                    .fold(0.0, f64::max);
                if kkt_violation > KKT_TOLERANCE * gradient_scale {
                    return Err(Error::Numerical(format!("KKT violation {kkt_violation:e} after solve")));
                }
                let variance = quad(sigma, &w);
                return Ok(QpSolution {
                    objective: variance - c.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>(),
                    weights: w,
                    variance,
                    kkt_multiplier: mu,
                    kkt_violation,
                    ridge_epsilon,
                    iterations: iteration,
                });
            }
        }
    }
    Err(Error::Numerical(format!("active set did not terminate in {max_iterations} iterations")))
}

/// Minimizer over the free coordinates with the rest pinned at zero, and the
/// budget multiplier.
fn solve_equality_qp(q: &DMatrix<f64>, c: &[f64], idx: &[usize]) -> Result<(Vec<f64>, f64)> {
    let k = idx.len();
    let mut kkt = DMatrix::zeros(k + 1, k + 1);
    let mut rhs = DVector::zeros(k + 1);
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            kkt[(a, b)] = 2.0 * q[(i, j)];
        }
        kkt[(a, k)] = -1.0;
        kkt[(k, a)] = 1.0;
        rhs[a] = c[i];
    }
    rhs[k] = 1.0;
    let sol = kkt
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular KKT system".into()))?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite KKT solution".into()));
    }
    Ok((sol.rows(0, k).iter().copied().collect(), sol[k]))
}

fn gradient(q: &DMatrix<f64>, c: &[f64], w: &[f64]) -> Vec<f64> {
    let n = w.len();
    (0..n)
        .map(|i| 2.0 * (0..n).map(|j| q[(i, j)] * w[j]).sum::<f64>() - c[i])
        .collect()
}

fn quad(m: &DMatrix<f64>, w: &[f64]) -> f64 {
    let n = w.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            total += w[i] * m[(i, j)] * w[j];
        }
    }
    total.max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioSolution {
    pub sectors: Vec<SectorId>,
    pub weights: Vec<f64>,
    pub variance: f64,
    pub theta: f64,
    /// `weight_i > theta_p`.
    pub active: Vec<bool>,
    pub theta_p: f64,
    pub n_pct: f64,
    pub theta_formula: ThetaFormula,
    pub kkt_multiplier: f64,
    pub kkt_violation: f64,
    pub ridge_epsilon: f64,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

/// Solve and label the sectors held above the weight threshold.
pub fn portfolio_solution(
    sectors: Vec<SectorId>,
    sigma: &DMatrix<f64>,
    theta: f64,
    expected: &[f64],
    n_pct: f64,
    formula: ThetaFormula,
) -> Result<PortfolioSolution> {
    if sectors.len() != sigma.nrows() {
        return Err(Error::LengthMismatch {
            left: sectors.len(),
            right: sigma.nrows(),
        });
    }
    let qp = min_variance_weights(sigma, theta, expected)?;
    let split = threshold_flags(&qp.weights, n_pct, formula)?;
    let mut warnings = Vec::new();
    if qp.ridge_epsilon > 0.0 {
        warnings.push(format!("covariance is near singular; ridge {:e} added to the diagonal", qp.ridge_epsilon));
    }
    if split.degenerate {
        warnings.push("weights have no dispersion; no sector labelled active".into());
    }
    Ok(PortfolioSolution {
        sectors,
        weights: qp.weights,
        variance: qp.variance,
        theta,
        active: split.flags,
        theta_p: split.theta,
        n_pct,
        theta_formula: formula,
        kkt_multiplier: qp.kkt_multiplier,
        kkt_violation: qp.kkt_violation,
        ridge_epsilon: qp.ridge_epsilon,
        iterations: qp.iterations,
        warnings,
    })
}
