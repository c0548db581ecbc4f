//! Monthly realized covariance from intraday returns, correlations, the
//! `1 - rho^2` distance transform and half-vectorisation.
//!
//! `vech` stacks the lower triangle column by column: for an `N x N` matrix
//! the order is `(0,0), (1,0), ..., (N-1,0), (1,1), (2,1), ...`. Column
//! headers written by this crate spell out that order as `row:col` pairs of
//! instrument ids.

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::market_data::ReturnPanel;
use crate::month::Month;

/// Smallest eigenvalue treated as rounding noise.
pub const PSD_TOLERANCE: f64 = 1e-10;
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RcovOptions {
    /// Divide each month's cross-product sum by its number of rows.
    pub per_observation: bool,
}

/// Monthly realized covariance matrices in month order.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizedCovSeries {
    pub months: Vec<Month>,
    pub instruments: Vec<String>,
    pub matrices: Vec<DMatrix<f64>>,
    /// Intraday rows aggregated into each month.
    pub observations: Vec<usize>,
    /// Minimum eigenvalue of each month before any repair.
    pub min_eigenvalues: Vec<f64>,
}

impl RealizedCovSeries {
    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.instruments.len()
    }

    pub fn traces(&self) -> Vec<f64> {
        self.matrices.iter().map(|m| m.trace()).collect()
    }

    /// `T x N(N+1)/2` matrix of half-vectorised covariances.
    pub fn vech_matrix(&self) -> DMatrix<f64> {
        let p = vech_len(self.dim());
        let mut out = DMatrix::zeros(self.len(), p);
        for (t, m) in self.matrices.iter().enumerate() {
            for (k, v) in vech_unchecked(m).into_iter().enumerate() {
                out[(t, k)] = v;
            }
        }
        out
    }

    pub fn vech_header(&self) -> Vec<String> {
        vech_labels(&self.instruments)
    }

    /// Rebuilds a series from stored half-vectorised rows.
    pub fn from_vech(
        months: Vec<Month>,
        instruments: Vec<String>,
        rows: &DMatrix<f64>,
        observations: Vec<usize>,
    ) -> Result<Self> {
        let n = instruments.len();
        if rows.ncols() != vech_len(n) || rows.nrows() != months.len() {
            return Err(Error::DimensionMismatch(format!(
                "vech table is {}x{}, expected {}x{}",
                rows.nrows(),
                rows.ncols(),
                months.len(),
                vech_len(n)
            )));
        }
        let matrices: Vec<_> = (0..rows.nrows())
            .map(|t| {
                let v: Vec<f64> = rows.row(t).iter().copied().collect();
                unvech(&v)
            })
            .collect::<Result<_>>()?;
        let min_eigenvalues = matrices.iter().map(linalg::min_eigenvalue).collect();
        Ok(RealizedCovSeries {
            months,
            instruments,
            matrices,
            observations,
            min_eigenvalues,
        })
    }
}

/// Realized covariance: for each month, `sum_t r_t r_t'` over its intraday
/// rows. Months with fewer than `N + 1` rows are skipped with a warning.
pub fn realized_covariance(
    panel: &ReturnPanel,
    opts: RcovOptions,
) -> Result<(RealizedCovSeries, Vec<String>)> {
    let n = panel.instruments().len();
    let r = panel.returns();
    let mut warnings = Vec::new();
    let mut series = RealizedCovSeries {
        months: Vec::new(),
        instruments: panel.instruments().to_vec(),
        matrices: Vec::new(),
        observations: Vec::new(),
        min_eigenvalues: Vec::new(),
    };
    for (month, range) in panel.month_ranges() {
        let rows = range.len();
        if rows < n + 1 {
            let msg = format!("{month}: {rows} intraday rows < {} required, month skipped", n + 1);
            warn!("{msg}");
            warnings.push(msg);
            continue;
        }
        let block = r.rows(range.start, rows);
        let mut cov = block.transpose() * block;
        if opts.per_observation {
            cov /= rows as f64;
        }
        symmetrize(&mut cov);
        let (repaired, min_eig) = repair_psd(&cov, &month.to_string())?;
        series.months.push(month);
        series.matrices.push(repaired);
        series.observations.push(rows);
        series.min_eigenvalues.push(min_eig);
    }
    if series.is_empty() {
        return Err(Error::TooShort {
            what: "realized covariance (months with enough rows)".into(),
            needed: 1,
            got: 0,
        });
    }
    Ok((series, warnings))
}

fn symmetrize(m: &mut DMatrix<f64>) {
    for j in 0..m.ncols() {
        for i in j + 1..m.nrows() {
            let v = m[(i, j)];
            m[(j, i)] = v;
        }
    }
}

/// Clips eigenvalues in `(-1e-10, 0)` to zero. Returns the repaired matrix and
/// the original minimum eigenvalue; anything more negative is an error.
pub fn repair_psd(m: &DMatrix<f64>, label: &str) -> Result<(DMatrix<f64>, f64)> {
    let eig = m.clone().symmetric_eigen();
    let min_eig = eig.eigenvalues.min();
    if min_eig >= 0.0 {
        return Ok((m.clone(), min_eig));
    }
    if min_eig < -PSD_TOLERANCE {
        return Err(Error::NotPsd {
            label: label.to_string(),
            min_eigenvalue: min_eig,
        });
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let mut rebuilt = &eig.eigenvectors
        * DMatrix::from_diagonal(&clipped)
        * eig.eigenvectors.transpose();
    symmetrize(&mut rebuilt);
    Ok((rebuilt, min_eig))
}

/// `rho_ij = cov_ij / sqrt(cov_ii cov_jj)`, clamped to `[-1, 1]`, with an
/// exact unit diagonal.
pub fn to_correlation(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = cov.nrows();
    if n != cov.ncols() {
        return Err(Error::DimensionMismatch("covariance is not square".into()));
    }
    let sd: Vec<f64> = (0..n).map(|i| cov[(i, i)]).collect();
    if let Some(i) = sd.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::ZeroVariance(format!("diagonal entry {i} is {}", sd[i])));
    }
    let sd: Vec<f64> = sd.iter().map(|v| v.sqrt()).collect();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            (cov[(i, j)] / (sd[i] * sd[j])).clamp(-1.0, 1.0)
        }
    }))
}

/// `d_ij = 1 - rho_ij^2`, zero diagonal.
pub fn to_metric(corr: &DMatrix<f64>) -> DMatrix<f64> {
    let n = corr.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            1.0 - corr[(i, j)] * corr[(i, j)]
        }
    })
}

/// Monthly `1 - rho^2` distance matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrixSeries {
    pub months: Vec<Month>,
    pub instruments: Vec<String>,
    pub matrices: Vec<DMatrix<f64>>,
}

impl DistanceMatrixSeries {
    pub fn from_covariances(rcov: &RealizedCovSeries) -> Result<Self> {
        let matrices = rcov
            .matrices
            .iter()
            .zip(&rcov.months)
            .map(|(m, month)| {
                to_correlation(m)
                    .map(|c| to_metric(&c))
                    .map_err(|e| Error::invalid(format!("{month}: {e}")))
            })
            .collect::<Result<_>>()?;
        Ok(DistanceMatrixSeries {
            months: rcov.months.clone(),
            instruments: rcov.instruments.clone(),
            matrices,
        })
    }

    /// `T x N(N-1)/2` matrix of the strictly-lower-triangle entries, in `vech`
    /// order with the (identically zero) diagonal left out.
    pub fn feature_matrix(&self) -> DMatrix<f64> {
        let n = self.instruments.len();
        let p = n * (n - 1) / 2;
        let mut out = DMatrix::zeros(self.matrices.len(), p);
        for (t, m) in self.matrices.iter().enumerate() {
            let mut k = 0;
            for j in 0..n {
                for i in j + 1..n {
                    out[(t, k)] = m[(i, j)];
                    k += 1;
                }
            }
        }
        out
    }

    pub fn feature_header(&self) -> Vec<String> {
        let n = self.instruments.len();
        let mut out = Vec::new();
        for j in 0..n {
            for i in j + 1..n {
                out.push(format!("{}:{}", self.instruments[i], self.instruments[j]));
            }
        }
        out
    }
}

pub fn vech_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Column labels `row:col` in `vech` order.
pub fn vech_labels(instruments: &[String]) -> Vec<String> {
    let n = instruments.len();
    let mut out = Vec::with_capacity(vech_len(n));
    for j in 0..n {
        for i in j..n {
            out.push(format!("{}:{}", instruments[i], instruments[j]));
        }
    }
    out
}

fn vech_unchecked(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(vech_len(n));
    for j in 0..n {
        for i in j..n {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Lower triangle stacked column by column. Rejects matrices that are not
/// square or not symmetric to `1e-12` (relative to entry magnitude above 1).
pub fn vech(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch("vech needs a square matrix".into()));
    }
    let mut worst: f64 = 0.0;
    for j in 0..m.ncols() {
        for i in j + 1..m.nrows() {
            let (a, b) = (m[(i, j)], m[(j, i)]);
            let scale = a.abs().max(b.abs()).max(1.0);
            worst = worst.max((a - b).abs() / scale);
        }
    }
    if worst > SYMMETRY_TOLERANCE {
        return Err(Error::NotSymmetric(worst));
    }
    Ok(vech_unchecked(m))
}

/// Inverse of [`vech`].
pub fn unvech(v: &[f64]) -> Result<DMatrix<f64>> {
    // n(n+1)/2 = len
    let n = (((8 * v.len() + 1) as f64).sqrt() as usize - 1) / 2;
    if vech_len(n) != v.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} is not a triangular number",
            v.len()
        )));
    }
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        for i in j..n {
            m[(i, j)] = v[k];
            m[(j, i)] = v[k];
            k += 1;
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, TimeZone, Utc};
    use proptest::prelude::*;

    fn panel(rows: &[[f64; 2]], start_day: u32) -> ReturnPanel {
        let t0 = Utc.with_ymd_and_hms(2010, 1, start_day, 0, 0, 0).unwrap();
        let ts = (0..rows.len()).map(|i| t0 + Duration::hours(i as i64)).collect();
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        ReturnPanel::new(
            ts,
            vec!["A".into(), "B".into()],
            DMatrix::from_row_slice(rows.len(), 2, &flat),
        )
        .unwrap()
    }

    #[test]
    fn orthogonal_rows_give_identity() {
        let p = panel(&[[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]], 4);
        let (s, w) = realized_covariance(&p, RcovOptions::default()).unwrap();
        assert!(w.is_empty());
        assert_eq!(s.matrices[0], DMatrix::identity(2, 2));
    }

    #[test]
    fn single_row_is_rank_one_outer_product() {
        let (a, b) = (0.3, -0.7);
        let p = panel(&[[a, b], [0.0, 0.0], [0.0, 0.0]], 4);
        let (s, _) = realized_covariance(&p, RcovOptions::default()).unwrap();
        let m = &s.matrices[0];
        assert_eq!(m[(0, 0)], a * a);
        assert_eq!(m[(1, 0)], a * b);
        assert_eq!(m[(0, 1)], a * b);
        assert_eq!(m[(1, 1)], b * b);
        assert!(s.min_eigenvalues[0] >= -PSD_TOLERANCE);
    }

    #[test]
    fn short_month_is_skipped_with_warning() {
        // 2 rows on Jan 31, then 3 rows in February
        let t0 = Utc.with_ymd_and_hms(2010, 1, 31, 22, 0, 0).unwrap();
        let ts = (0..5).map(|i| t0 + Duration::hours(i)).collect();
        let p = ReturnPanel::new(
            ts,
            vec!["A".into(), "B".into()],
            DMatrix::from_row_slice(5, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.5, 0.2, 0.1, 0.3]),
        )
        .unwrap();
        let (s, w) = realized_covariance(&p, RcovOptions::default()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.months[0].to_string(), "2010-02");
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn per_observation_scaling() {
        let p = panel(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.0, 0.0]], 4);
        let (s, _) = realized_covariance(&p, RcovOptions { per_observation: true }).unwrap();
        assert!((s.matrices[0][(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn correlation_examples() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert_eq!(to_correlation(&id).unwrap(), id);
        let c = to_correlation(&DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 1.0])).unwrap();
        assert_eq!(c, DMatrix::from_element(2, 2, 1.0));
        let c = to_correlation(&DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0])).unwrap();
        assert!((c[(0, 1)] + 0.5).abs() < 1e-15);
        assert!(to_correlation(&DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0])).is_err());
    }

    #[test]
    fn metric_examples() {
        for (rho, d) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.6, 0.64)] {
            let c = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
            let m = to_metric(&c);
            assert!((m[(0, 1)] - d).abs() < 1e-15);
            assert_eq!(m[(0, 0)], 0.0);
        }
    }

    #[test]
    fn vech_examples() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 3.0]);
        assert_eq!(vech(&m).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(
            vech(&DMatrix::identity(3, 3)).unwrap(),
            vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0]
        );
        assert_eq!(vech(&DMatrix::identity(9, 9)).unwrap().len(), 45);
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.1, 3.0]);
        assert!(matches!(vech(&asym), Err(Error::NotSymmetric(_))));
        let labels = vech_labels(&["A".into(), "B".into(), "C".into()]);
        assert_eq!(labels, ["A:A", "B:A", "C:A", "B:B", "C:B", "C:C"]);
    }

    #[test]
    fn psd_repair_clips_noise_only() {
        let noisy = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 - 1e-11]);
        let (fixed, min_eig) = repair_psd(&noisy, "x").unwrap();
        assert!(min_eig < 0.0);
        assert!(linalg::min_eigenvalue(&fixed) >= -1e-15);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(repair_psd(&bad, "x"), Err(Error::NotPsd { .. })));
    }

    fn correlation_strategy() -> impl Strategy<Value = DMatrix<f64>> {
        (2usize..6).prop_flat_map(|n| {
            prop::collection::vec(-1.0f64..1.0, n * (n + 3)).prop_map(move |v| {
                let x = DMatrix::from_row_slice(n + 3, n, &v);
                let cov = x.transpose() * x + DMatrix::identity(n, n) * 1e-6;
                to_correlation(&cov).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn metric_axioms_hold(corr in correlation_strategy()) {
            let d = to_metric(&corr);
            let n = d.nrows();
            for i in 0..n {
                prop_assert_eq!(d[(i, i)], 0.0);
                for j in 0..n {
                    prop_assert_eq!(d[(i, j)], d[(j, i)]);
                    prop_assert!((0.0..=1.0).contains(&d[(i, j)]));
                    // zero distance exactly when rho^2 = 1
                    if i != j {
                        prop_assert_eq!(d[(i, j)] == 0.0, corr[(i, j)].powi(2) == 1.0);
                    }
                }
            }
        }

        #[test]
        fn vech_round_trips(v in prop::collection::vec(-1e3f64..1e3, 1..=6).prop_flat_map(|seed| {
            let n = seed.len();
            prop::collection::vec(-1e3f64..1e3, n * (n + 1) / 2)
        })) {
            let m = unvech(&v).unwrap();
            prop_assert_eq!(vech(&m).unwrap(), v);
        }

        #[test]
        fn monthly_matrices_are_psd(v in prop::collection::vec(-0.05f64..0.05, 3 * 40)) {
            let rows = v.len() / 3;
            let t0 = Utc.with_ymd_and_hms(2010, 1, 1, 0, 0, 0).unwrap();
            let ts = (0..rows).map(|i| t0 + Duration::hours(17 * i as i64)).collect();
            let p = ReturnPanel::new(ts, vec!["A".into(), "B".into(), "C".into()],
                DMatrix::from_row_slice(rows, 3, &v)).unwrap();
            if let Ok((s, _)) = realized_covariance(&p, RcovOptions::default()) {
                for (m, e) in s.matrices.iter().zip(&s.min_eigenvalues) {
                    prop_assert!(*e >= -PSD_TOLERANCE);
                    prop_assert!(linalg::min_eigenvalue(m) >= -PSD_TOLERANCE);
                    prop_assert_eq!(m.clone(), m.transpose());
                }
            }
        }
    }
}
