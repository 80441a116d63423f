//! Linear quantile regression by iteratively reweighted least squares.
//!
//! The pinball loss is written as `½|r| + (τ − ½)r`. Each iteration
//! majorizes `½|r|` by `r²/(4a) + a/4` with `a = max(|r_prev|, ε)` and solves
//! the resulting weighted normal equations
//!
//! ```text
//! (XᵀWX + λI) β = XᵀWy + (2τ − 1) Xᵀ1,   W = diag(1/a)
//! ```
//!
//! Rows are supplied as groups sharing one sparse design row, which keeps the
//! per-iteration cost at one pass over the responses plus a pass over the
//! distinct rows.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::design::SparseRow;
use super::FactorError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileOptions {
    pub tau: f64,
    /// Floor on `|r|` in the weights.
    pub smoothing: f64,
    /// Ridge added to the diagonal of the normal equations.
    pub ridge: f64,
    /// Stop once the mean pinball loss improves by less than this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for QuantileOptions {
    fn default() -> Self {
        QuantileOptions {
            tau: 0.5,
            smoothing: 1e-6,
            ridge: 1e-8,
            tolerance: 1e-10,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileFit {
    pub coefficients: Vec<f64>,
    /// Mean pinball loss at `coefficients`.
    pub loss: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Distinct design row with all responses observed at it.
#[derive(Debug, Clone, PartialEq)]
pub struct RowGroup {
    pub row: SparseRow,
    pub responses: Vec<f64>,
}

pub fn pinball(residual: f64, tau: f64) -> f64 {
    if residual < 0.0 {
        residual * (tau - 1.0)
    } else {
        residual * tau
    }
}

fn dot(row: &SparseRow, beta: &[f64]) -> f64 {
    row.iter().map(|&(j, v)| v * beta[j]).sum()
}

fn mean_loss(groups: &[RowGroup], beta: &[f64], tau: f64, n: usize) -> f64 {
    let total: f64 = groups
        .iter()
        .map(|g| {
            let eta = dot(&g.row, beta);
            g.responses.iter().map(|y| pinball(y - eta, tau)).sum::<f64>()
        })
        .sum();
    total / n as f64
}

/// Solves `(A + λI) β = b` where `A` and `b` are accumulated per group from
/// a total weight and a weighted response sum.
fn solve_weighted<F>(
    groups: &[RowGroup],
    p: usize,
    ridge: f64,
    mut weights: F,
) -> Result<Vec<f64>, FactorError>
where
    F: FnMut(&RowGroup) -> (f64, f64),
{
    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut b = DVector::<f64>::zeros(p);
    for g in groups {
        let (sw, swy) = weights(g);
        for &(i, xi) in &g.row {
            b[i] += swy * xi;
            for &(j, xj) in &g.row {
                a[(i, j)] += sw * xi * xj;
            }
        }
    }
    for i in 0..p {
        a[(i, i)] += ridge;
    }
    let chol = a.cholesky().ok_or(FactorError::SingularFit)?;
    let beta = chol.solve(&b);
    if beta.iter().all(|v| v.is_finite()) {
        Ok(beta.iter().copied().collect())
    } else {
        Err(FactorError::SingularFit)
    }
}

/// Fits `p` coefficients minimizing the mean pinball loss. Starts from the
/// least-squares solution and returns the best iterate seen.
pub fn fit_quantile_grouped(
    groups: &[RowGroup],
    p: usize,
    opts: &QuantileOptions,
) -> Result<QuantileFit, FactorError> {
    let tau = opts.tau;
    if !(tau > 0.0 && tau < 1.0) {
        return Err(FactorError::InvalidTau(tau));
    }
    let n: usize = groups.iter().map(|g| g.responses.len()).sum();
    if n < p || n == 0 {
        return Err(FactorError::InsufficientRows { rows: n, features: p });
    }

    let mut beta = solve_weighted(groups, p, opts.ridge, |g| {
        (g.responses.len() as f64, g.responses.iter().sum())
    })?;
    let mut loss = mean_loss(groups, &beta, tau, n);
    let (mut best, mut best_loss) = (beta.clone(), loss);
    let linear = 2.0 * tau - 1.0;
    let eps = opts.smoothing;

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        iterations += 1;
        let prev = beta.clone();
        beta = solve_weighted(groups, p, opts.ridge, |g| {
            let eta = dot(&g.row, &prev);
            let mut sw = 0.0;
            let mut swy = 0.0;
            for &y in &g.responses {
                let w = 1.0 / (y - eta).abs().max(eps);
                sw += w;
                swy += w * y;
            }
            (sw, swy + linear * g.responses.len() as f64)
        })?;
        let next = mean_loss(groups, &beta, tau, n);
        if next < best_loss {
            best_loss = next;
            best.clone_from(&beta);
        }
        let improvement = loss - next;
        loss = next;
        if improvement < opts.tolerance {
            converged = true;
            break;
        }
    }
    Ok(QuantileFit {
        coefficients: best,
        loss: best_loss,
        iterations,
        converged,
    })
}

/// Dense-row convenience wrapper: each row is its own group.
pub fn fit_quantile(
    rows: &[Vec<f64>],
    y: &[f64],
    opts: &QuantileOptions,
) -> Result<QuantileFit, FactorError> {
    let p = rows.first().map_or(0, Vec::len);
    let groups: Vec<RowGroup> = rows
        .iter()
        .zip(y)
        .map(|(r, &v)| RowGroup {
            row: r
                .iter()
                .enumerate()
                .filter(|(_, x)| **x != 0.0)
                .map(|(j, x)| (j, *x))
                .collect(),
            responses: vec![v],
        })
        .collect();
    fit_quantile_grouped(&groups, p, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ols(rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        let p = rows[0].len();
        let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        let yv = DVector::from_column_slice(y);
        let xtx = x.transpose() * &x;
        let xty = x.transpose() * yv;
        xtx.lu().solve(&xty).unwrap().iter().copied().collect()
    }

    fn loss_of(rows: &[Vec<f64>], y: &[f64], beta: &[f64], tau: f64) -> f64 {
        rows.iter()
            .zip(y)
            .map(|(r, v)| {
                let eta: f64 = r.iter().zip(beta).map(|(a, b)| a * b).sum();
                pinball(v - eta, tau)
            })
            .sum::<f64>()
            / y.len() as f64
    }

    fn linear_data(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let x: f64 = rng.random_range(0.0..10.0);
            // Symmetric, heavy-ish noise: difference of two uniforms.
            let e: f64 = rng.random_range(-1.0..1.0) + rng.random_range(-1.0..1.0);
            rows.push(vec![1.0, x]);
            y.push(2.0 + 0.5 * x + e);
        }
        (rows, y)
    }

    #[test]
    fn pinball_definition() {
        assert_eq!(pinball(2.0, 0.5), 1.0);
        assert_eq!(pinball(-2.0, 0.5), 1.0);
        assert!((pinball(-2.0, 0.9) - 0.2).abs() < 1e-15);
        assert!((pinball(1.0, 0.9) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn symmetric_noise_matches_least_squares() {
        let (rows, y) = linear_data(4000, 3);
        let fit = fit_quantile(&rows, &y, &QuantileOptions::default()).unwrap();
        let ls = ols(&rows, &y);
        // Standard errors of the least-squares fit.
        let n = y.len() as f64;
        let resid: Vec<f64> = rows
            .iter()
            .zip(&y)
            .map(|(r, v)| v - (ls[0] + ls[1] * r[1]))
            .collect();
        let s2 = resid.iter().map(|e| e * e).sum::<f64>() / (n - 2.0);
        let xs: Vec<f64> = rows.iter().map(|r| r[1]).collect();
        let xbar = xs.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
        let se_slope = (s2 / sxx).sqrt();
        let se_int = (s2 * (1.0 / n + xbar * xbar / sxx)).sqrt();
        assert!((fit.coefficients[0] - ls[0]).abs() < 2.0 * se_int);
        assert!((fit.coefficients[1] - ls[1]).abs() < 2.0 * se_slope);
        assert!(fit.loss <= loss_of(&rows, &y, &ls, 0.5));
    }

    #[test]
    fn constant_response() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![1.0, (i % 7) as f64]).collect();
        let y = vec![3.25; 50];
        let fit = fit_quantile(&rows, &y, &QuantileOptions::default()).unwrap();
        assert!((fit.coefficients[0] - 3.25).abs() < 1e-9);
        assert!(fit.coefficients[1].abs() < 1e-9);
    }

    #[test]
    fn median_is_equivariant_under_negation() {
        let (rows, y) = linear_data(300, 9);
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        let a = fit_quantile(&rows, &y, &QuantileOptions::default()).unwrap();
        let b = fit_quantile(&rows, &neg, &QuantileOptions::default()).unwrap();
        for (u, v) in a.coefficients.iter().zip(&b.coefficients) {
            assert!((u + v).abs() <= 1e-12 * u.abs().max(1.0));
        }
    }

    #[test]
    fn intercept_only_finds_sample_quantile() {
        let y: Vec<f64> = (1..=101).map(|v| v as f64).collect();
        let rows = vec![vec![1.0]; y.len()];
        let med = fit_quantile(&rows, &y, &QuantileOptions::default()).unwrap();
        assert!((med.coefficients[0] - 51.0).abs() < 1e-3);
        let q90 = fit_quantile(
            &rows,
            &y,
            &QuantileOptions {
                tau: 0.9,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((q90.coefficients[0] - 91.0).abs() < 0.5, "{:?}", q90);
    }

    #[test]
    fn rejects_bad_inputs() {
        let rows = vec![vec![1.0, 2.0]];
        assert!(matches!(
            fit_quantile(&rows, &[1.0], &QuantileOptions::default()),
            Err(FactorError::InsufficientRows { .. })
        ));
        let opts = QuantileOptions {
            tau: 1.0,
            ..Default::default()
        };
        assert_eq!(
            fit_quantile(&rows, &[1.0], &opts),
            Err(FactorError::InvalidTau(1.0))
        );
    }
}
