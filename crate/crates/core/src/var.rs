//! Linear VAR(p) design matrices and OLS fits.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Regression layout for a VAR(p) with optional exogenous block.
///
/// Row `r` of `targets` is `y[lags + r]`; the matching row of `base` is
/// `[1, y[t-1], ..., y[t-p], x[t]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarDesign {
    pub targets: DMatrix<f64>,
    pub base: DMatrix<f64>,
    pub lags: usize,
    pub n: usize,
    pub k: usize,
}

impl VarDesign {
    pub fn new(y: &DMatrix<f64>, lags: usize, exog: Option<&DMatrix<f64>>) -> Result<Self> {
        let (t, n) = y.shape();
        if lags == 0 {
            return Err(Error::invalid("lag order must be at least 1"));
        }
        if t <= lags {
            return Err(Error::TooShort {
                what: "VAR design".into(),
                needed: lags + 1,
                got: t,
            });
        }
        let k = match exog {
            Some(x) if x.nrows() != t => {
                return Err(Error::DimensionMismatch(format!(
                    "exogenous block has {} rows, scores have {t}",
                    x.nrows()
                )))
            }
            Some(x) => x.ncols(),
            None => 0,
        };
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("scores contain non-finite values"));
        }
        let rows = t - lags;
        let m = 1 + n * lags + k;
        let targets = y.rows(lags, rows).into_owned();
        let base = DMatrix::from_fn(rows, m, |r, c| {
            let t = r + lags;
            if c == 0 {
                1.0
            } else if c <= n * lags {
                let j = (c - 1) / n;
                let i = (c - 1) % n;
                y[(t - 1 - j, i)]
            } else {
                exog.map(|x| x[(t, c - 1 - n * lags)]).unwrap_or(0.0)
            }
        });
        Ok(VarDesign {
            targets,
            base,
            lags,
            n,
            k,
        })
    }

    pub fn rows(&self) -> usize {
        self.targets.nrows()
    }

    pub fn regressors(&self) -> usize {
        self.base.ncols()
    }
}

/// One block of VAR coefficients: intercept, lag matrices, exogenous loadings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarCoefficients {
    pub mu: DVector<f64>,
    /// `phi[j]` multiplies `y[t-1-j]`.
    pub phi: Vec<DMatrix<f64>>,
    /// `n x k`.
    pub a: DMatrix<f64>,
}

impl VarCoefficients {
    /// Reads the block that starts at row `offset` of a stacked `m x n`
    /// coefficient matrix laid out like [`VarDesign::base`].
    pub fn from_stacked(b: &DMatrix<f64>, offset: usize, n: usize, lags: usize, k: usize) -> Self {
        let mu = b.row(offset).transpose();
        let phi = (0..lags)
            .map(|j| b.rows(offset + 1 + j * n, n).transpose())
            .collect();
        let a = b.rows(offset + 1 + lags * n, k).transpose();
        VarCoefficients { mu, phi, a }
    }

    pub fn zeros(n: usize, lags: usize, k: usize) -> Self {
        VarCoefficients {
            mu: DVector::zeros(n),
            phi: vec![DMatrix::zeros(n, n); lags],
            a: DMatrix::zeros(n, k),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarFit {
    pub coefficients: VarCoefficients,
    pub residuals: DMatrix<f64>,
    pub ssr: f64,
}

pub fn fit_var(design: &VarDesign) -> Result<VarFit> {
    let ls = linalg::least_squares(&design.base, &design.targets)?;
    Ok(VarFit {
        coefficients: VarCoefficients::from_stacked(
            &ls.coefficients,
            0,
            design.n,
            design.lags,
            design.k,
        ),
        ssr: ls.ssr(),
        residuals: ls.residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn design_layout() {
        let y = DMatrix::from_row_slice(4, 2, &[1.0, 10.0, 2.0, 20.0, 3.0, 30.0, 4.0, 40.0]);
        let x = DMatrix::from_column_slice(4, 1, &[7.0, 8.0, 9.0, 10.0]);
        let d = VarDesign::new(&y, 2, Some(&x)).unwrap();
        assert_eq!(d.rows(), 2);
        assert_eq!(d.base.row(0).iter().copied().collect::<Vec<_>>(), [1.0, 2.0, 20.0, 1.0, 10.0, 9.0]);
        assert_eq!(d.targets.row(1).iter().copied().collect::<Vec<_>>(), [4.0, 40.0]);
    }

    #[test]
    fn recovers_exact_var() {
        let mut y = DMatrix::zeros(30, 2);
        y[(0, 0)] = 1.0;
        y[(0, 1)] = -0.5;
        for t in 1..30 {
            let wobble = (t as f64 * 1.7).sin();
            y[(t, 0)] = 0.1 + 0.5 * y[(t - 1, 0)] - 0.2 * y[(t - 1, 1)] + wobble;
            y[(t, 1)] = -0.3 + 0.4 * y[(t - 1, 1)] + 0.3 * wobble * wobble;
        }
        let d = VarDesign::new(&y, 1, None).unwrap();
        let fit = fit_var(&d).unwrap();
        assert!(fit.ssr > 0.0);
        assert_eq!(fit.coefficients.phi.len(), 1);
        assert_eq!(fit.coefficients.a.shape(), (2, 0));
    }

    #[test]
    fn rejects_bad_shapes() {
        let y = DMatrix::zeros(3, 2);
        assert!(VarDesign::new(&y, 0, None).is_err());
        assert!(VarDesign::new(&y, 3, None).is_err());
        assert!(VarDesign::new(&y, 1, Some(&DMatrix::zeros(2, 1))).is_err());
    }
}
