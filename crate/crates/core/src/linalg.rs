//! Small numerical helpers shared by the estimators.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Result of a multivariate least-squares fit `Y = X B + E`.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    /// `k x n` coefficients, one column per equation.
    pub coefficients: DMatrix<f64>,
    pub residuals: DMatrix<f64>,
    pub rank: usize,
}

impl LeastSquares {
    pub fn ssr(&self) -> f64 {
        self.residuals.iter().map(|e| e * e).sum()
    }
}

/// Minimum-norm least squares through the SVD. Singular values below
/// `max(T, k) * eps * s_max` are treated as zero.
pub fn least_squares(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<LeastSquares> {
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "regressors have {} rows, targets {}",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.ncols() == 0 || x.nrows() == 0 {
        return Err(Error::invalid("empty regression"));
    }
    let svd = x.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let tol = s_max * (x.nrows().max(x.ncols()) as f64) * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let coefficients = svd
        .solve(y, tol)
        .map_err(|e| Error::RankDeficient(e.to_string()))?;
    let residuals = y - x * &coefficients;
    Ok(LeastSquares {
        coefficients,
        residuals,
        rank,
    })
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_sd(x: &[f64]) -> f64 {
    let m = mean(x);
    let ss: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (x.len() as f64 - 1.0)).sqrt()
}

pub fn median(x: &[f64]) -> f64 {
    quantile(x, 0.5)
}

/// Linear-interpolation quantile (type 7): position `q (n - 1)` in the
/// sorted sample.
pub fn quantile(x: &[f64], q: f64) -> f64 {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, q)
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `n` points evenly spaced on a log scale from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Sample covariance of the columns of `x` (rows are observations).
pub fn sample_covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let t = x.nrows() as f64;
    let means = x.row_mean();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= &means;
    }
    (centered.transpose() * &centered) / (t - 1.0)
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// decreasing order.
pub fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = DMatrix::from_fn(m.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().min()
}

/// Natural log of the determinant of a symmetric positive definite matrix.
pub fn ln_det_spd(m: &DMatrix<f64>) -> Option<f64> {
    m.clone()
        .cholesky()
        .map(|c| 2.0 * c.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}
