//! Column standardisation and principal components.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub data: DMatrix<f64>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

/// Centres every column and scales it to unit sample standard deviation.
/// `names` is only used to label a zero-variance column in the error.
pub fn standardize(panel: &DMatrix<f64>, names: Option<&[String]>) -> Result<Standardized> {
    let (t, p) = panel.shape();
    if t < 2 {
        return Err(Error::TooShort {
            what: "standardisation".into(),
            needed: 2,
            got: t,
        });
    }
    let mut data = panel.clone();
    let mut means = Vec::with_capacity(p);
    let mut scales = Vec::with_capacity(p);
    for j in 0..p {
        let col: Vec<f64> = panel.column(j).iter().copied().collect();
        let m = linalg::mean(&col);
        let sd = linalg::sample_sd(&col);
        if !(sd > 0.0) || !sd.is_finite() {
            let name = names
                .and_then(|n| n.get(j).cloned())
                .unwrap_or_else(|| format!("column {j}"));
            return Err(Error::ZeroVariance(name));
        }
        for i in 0..t {
            data[(i, j)] = (panel[(i, j)] - m) / sd;
        }
        means.push(m);
        scales.push(sd);
    }
    Ok(Standardized {
        data,
        means,
        scales,
    })
}

/// Principal components from the eigen-decomposition of the sample
/// covariance. Each loading vector is signed so that its largest-magnitude
/// entry is positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub means: Vec<f64>,
    /// Scaling applied before the decomposition (all ones when the input was
    /// used as-is).
    pub scales: Vec<f64>,
    /// `p x k`, orthonormal columns.
    pub loadings: DMatrix<f64>,
    /// Eigenvalues of the retained components.
    pub variances: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    /// `T x k`.
    pub scores: DMatrix<f64>,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.loadings.ncols()
    }

    /// Maps scores back to the input space.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut out = &self.scores * self.loadings.transpose();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            for v in col.iter_mut() {
                *v = *v * self.scales[j] + self.means[j];
            }
        }
        out
    }
}

pub fn fit_pca(panel: &DMatrix<f64>, k: usize) -> Result<PcaModel> {
    let (t, p) = panel.shape();
    if k == 0 || k > t.min(p) {
        return Err(Error::invalid(format!(
            "component count {k} outside 1..={}",
            t.min(p)
        )));
    }
    if panel.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("panel contains non-finite values"));
    }
    if t < 2 {
        return Err(Error::TooShort {
            what: "PCA".into(),
            needed: 2,
            got: t,
        });
    }
    let means: Vec<f64> = (0..p).map(|j| panel.column(j).mean()).collect();
    let centered = DMatrix::from_fn(t, p, |i, j| panel[(i, j)] - means[j]);
    let cov = linalg::sample_covariance(panel);
    let (values, vectors) = linalg::sorted_symmetric_eigen(&cov);
    let total: f64 = values.iter().map(|v| v.max(0.0)).sum();
    if !(total > 0.0) {
        return Err(Error::ZeroVariance("panel has no variance".into()));
    }
    let mut loadings = vectors.columns(0, k).into_owned();
    for mut col in loadings.column_iter_mut() {
        let pivot = col
            .iter()
            .copied()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map(|(_, v)| v)
            .unwrap_or(1.0);
        if pivot < 0.0 {
            col.neg_mut();
        }
    }
    let variances: Vec<f64> = values.iter().take(k).map(|v| v.max(0.0)).collect();
    let explained_variance_ratio = variances.iter().map(|v| v / total).collect();
    let scores = &centered * &loadings;
    Ok(PcaModel {
        means,
        scales: vec![1.0; p],
        loadings,
        variances,
        explained_variance_ratio,
        scores,
    })
}

/// Standardises the panel, then runs PCA on the standardised data.
pub fn fit_pca_standardized(
    panel: &DMatrix<f64>,
    k: usize,
    names: Option<&[String]>,
) -> Result<PcaModel> {
    let st = standardize(panel, names)?;
    let mut model = fit_pca(&st.data, k)?;
    model.means = st.means;
    model.scales = st.scales;
    Ok(model)
}

/// Share of variance explained by the first `k` components.
pub fn cumulative_variance(model: &PcaModel, k: usize) -> Result<f64> {
    if k == 0 || k > model.n_components() {
        return Err(Error::invalid(format!(
            "k = {k} outside 1..={}",
            model.n_components()
        )));
    }
    Ok(model.explained_variance_ratio[..k].iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(t: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(t, p, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn standardize_examples() {
        let col = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let st = standardize(&col, None).unwrap();
        assert_eq!(st.data.as_slice(), &[-1.0, 0.0, 1.0]);
        let again = standardize(&st.data, None).unwrap();
        assert!((again.data - &st.data).abs().max() < 1e-10);
        let constant = DMatrix::from_row_slice(3, 2, &[1.0, 5.0, 2.0, 5.0, 3.0, 5.0]);
        let names = vec!["x".to_string(), "flat".to_string()];
        match standardize(&constant, Some(&names)) {
            Err(Error::ZeroVariance(name)) => assert_eq!(name, "flat"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dominant_direction() {
        let noise = gaussian(200, 3, 1);
        let panel = DMatrix::from_fn(200, 3, |i, j| {
            let s = i as f64 / 10.0;
            s * [1.0, 2.0, -1.0][j] + 1e-3 * noise[(i, j)]
        });
        let m = fit_pca(&panel, 3).unwrap();
        assert!(m.explained_variance_ratio[0] > 0.99);
        assert!(cumulative_variance(&m, 1).unwrap() > 0.99);
        // sign convention: largest |entry| of PC1 is the 2.0 direction
        assert!(m.loadings[(1, 0)] > 0.0);
    }

    #[test]
    fn full_rank_reconstruction_and_total_variance() {
        let panel = gaussian(50, 4, 2);
        let m = fit_pca(&panel, 4).unwrap();
        assert!((m.reconstruct() - &panel).abs().max() < 1e-8);
        assert!((cumulative_variance(&m, 4).unwrap() - 1.0).abs() < 1e-10);
        let ortho = m.loadings.transpose() * &m.loadings;
        assert!((ortho - DMatrix::identity(4, 4)).abs().max() < 1e-10);
        let st = fit_pca_standardized(&panel, 4, None).unwrap();
        assert!((st.reconstruct() - &panel).abs().max() < 1e-8);
    }

    #[test]
    fn k_out_of_range() {
        let panel = gaussian(5, 3, 3);
        assert!(fit_pca(&panel, 0).is_err());
        assert!(fit_pca(&panel, 4).is_err());
        let m = fit_pca(&panel, 2).unwrap();
        assert!(cumulative_variance(&m, 3).is_err());
    }

    #[test]
    fn spherical_panel_is_isotropic() {
        let m = fit_pca(&gaussian(10_000, 3, 4), 3).unwrap();
        for r in &m.explained_variance_ratio {
            assert!((r - 1.0 / 3.0).abs() < 0.05, "{r}");
        }
    }

    #[test]
    fn loadings_are_bit_identical_across_runs() {
        let panel = gaussian(80, 6, 5);
        let a = fit_pca(&panel, 3).unwrap();
        let b = fit_pca(&panel, 3).unwrap();
        assert_eq!(a.loadings.as_slice(), b.loadings.as_slice());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn scores_are_uncorrelated(seed in 0u64..10_000) {
            let m = fit_pca(&gaussian(60, 5, seed), 5).unwrap();
            let cov = linalg::sample_covariance(&m.scores);
            for i in 0..5 {
                for j in 0..5 {
                    if i != j {
                        prop_assert!(cov[(i, j)].abs() < 1e-8);
                    }
                }
            }
            prop_assert!(m.explained_variance_ratio.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(m.explained_variance_ratio.iter().sum::<f64>() <= 1.0 + 1e-12);
        }

        #[test]
        fn rotation_preserves_variance_ratios(seed in 0u64..10_000) {
            let panel = gaussian(40, 4, seed);
            let q = gaussian(4, 4, seed + 1).qr().q();
            let rotated = &panel * q;
            let a = fit_pca(&panel, 4).unwrap();
            let b = fit_pca(&rotated, 4).unwrap();
            for (x, y) in a.explained_variance_ratio.iter().zip(&b.explained_variance_ratio) {
                prop_assert!((x - y).abs() < 1e-8);
            }
        }
    }
}
