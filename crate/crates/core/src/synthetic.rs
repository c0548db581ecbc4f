//! Regime-switching return generator with known labels, and confusion
//! matrices for scoring detectors against it.
//!
//! A latent AR(1) path `b` is min-max normalised to `b_bar`; rows with
//! `b_bar > threshold` are HighVol. Shocks `Z ~ N(0, Sigma)` are scaled by
//! a deterministic variance state `s2` (`s2 <- omega + beta s2` after each
//! row, starting from the squared first shock row) and by
//! `shock_multiplier` in HighVol rows; returns follow
//! `r_t = mu + phi r_{t-1} + e_t`.

use chrono::{Duration, TimeZone, Utc};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{PriceSeries, ReturnPanel};
use crate::month::Month;
use crate::regime::{Regime, RegimeSeries};
use crate::seeds::split_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticParams {
    pub alpha: f64,
    pub noise_sd: f64,
    pub threshold: f64,
    pub sigma_diag: f64,
    pub sigma_offdiag: f64,
    pub mu: f64,
    pub phi: f64,
    pub omega: f64,
    pub beta: f64,
    pub shock_multiplier: f64,
    /// Rows per synthetic month when building monthly covariances.
    pub rows_per_month: usize,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams {
            alpha: 0.9,
            noise_sd: 0.1,
            threshold: 0.7,
            sigma_diag: 0.3,
            sigma_offdiag: 0.1,
            mu: 0.0,
            phi: 0.2,
            omega: 0.3,
            beta: 0.55,
            shock_multiplier: 3.0,
            rows_per_month: 21,
        }
    }
}

impl SyntheticParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.alpha,
            self.noise_sd,
            self.threshold,
            self.sigma_diag,
            self.sigma_offdiag,
            self.mu,
            self.phi,
            self.omega,
            self.beta,
            self.shock_multiplier,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("synthetic parameters must be finite"));
        }
        if self.alpha.abs() >= 1.0 {
            return Err(Error::invalid(format!(
                "alpha = {} gives a non-stationary regime path",
                self.alpha
            )));
        }
        if !(self.noise_sd > 0.0) {
            return Err(Error::invalid("noise_sd must be positive"));
        }
        if !(1..=28).contains(&self.rows_per_month) {
            return Err(Error::invalid("rows_per_month must lie in 1..=28 (one row per calendar day)"));
        }
        Ok(())
    }

    pub fn sigma(&self, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| if i == j { self.sigma_diag } else { self.sigma_offdiag })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub seed: u64,
    pub params: SyntheticParams,
    /// `T x n`.
    pub returns: DMatrix<f64>,
    pub true_regime: Vec<bool>,
    pub b_bar: Vec<f64>,
    /// Standardised shocks before scaling, `T x n`.
    pub shocks: DMatrix<f64>,
}

/// Generates `t` rows for `n` assets. The regime path and the shocks come
/// from two separately seeded streams, so changing e.g. the multiplier
/// leaves `b_bar`, the labels and `Z` untouched.
pub fn generate(t: usize, n: usize, params: &SyntheticParams, seed: u64) -> Result<SyntheticDataset> {
    params.validate()?;
    if t < 50 {
        return Err(Error::TooShort {
            what: "synthetic dataset".into(),
            needed: 50,
            got: t,
        });
    }
    if n < 2 {
        return Err(Error::invalid("need at least two assets"));
    }
    let sigma = params.sigma(n);
    let chol = sigma.clone().cholesky().ok_or_else(|| Error::NotPsd {
        label: "synthetic shock covariance".into(),
        min_eigenvalue: crate::linalg::min_eigenvalue(&sigma),
    })?;
    let l = chol.l();

    let mut regime_rng = ChaCha8Rng::seed_from_u64(split_seed(seed, 0));
    let mut shock_rng = ChaCha8Rng::seed_from_u64(split_seed(seed, 1));

    let stationary_sd = params.noise_sd / (1.0 - params.alpha * params.alpha).sqrt();
    let start = Normal::new(0.0, stationary_sd).map_err(|e| Error::invalid(e.to_string()))?;
    let noise = Normal::new(0.0, params.noise_sd).map_err(|e| Error::invalid(e.to_string()))?;
    let mut b = Vec::with_capacity(t);
    b.push(start.sample(&mut regime_rng));
    for i in 1..t {
        b.push(params.alpha * b[i - 1] + noise.sample(&mut regime_rng));
    }
    let (lo, hi) = b
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, z), v| (a.min(*v), z.max(*v)));
    let b_bar: Vec<f64> = b.iter().map(|v| (v - lo) / (hi - lo)).collect();
    let true_regime: Vec<bool> = b_bar.iter().map(|v| *v > params.threshold).collect();

    let mut shocks = DMatrix::zeros(t, n);
    for i in 0..t {
        let u = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut shock_rng));
        let z = &l * u;
        shocks.row_mut(i).copy_from(&z.transpose());
    }

    let mut s2: Vec<f64> = shocks.row(0).iter().map(|z| z * z).collect();
    let mut prev = vec![0.0; n];
    let mut returns = DMatrix::zeros(t, n);
    for i in 0..t {
        let scale = if true_regime[i] { params.shock_multiplier } else { 1.0 };
        for j in 0..n {
            let e = scale * s2[j] * shocks[(i, j)];
            let r = params.mu + params.phi * prev[j] + e;
            returns[(i, j)] = r;
            prev[j] = r;
            s2[j] = params.omega + params.beta * s2[j];
        }
    }
    Ok(SyntheticDataset {
        seed,
        params: params.clone(),
        returns,
        true_regime,
        b_bar,
        shocks,
    })
}

impl SyntheticDataset {
    pub fn n_rows(&self) -> usize {
        self.returns.nrows()
    }

    pub fn n_assets(&self) -> usize {
        self.returns.ncols()
    }

    /// Complete synthetic months; trailing rows that do not fill a month
    /// are left out of every monthly view.
    pub fn n_months(&self) -> usize {
        self.n_rows() / self.params.rows_per_month
    }

    pub fn instruments(&self) -> Vec<String> {
        (1..=self.n_assets()).map(|j| format!("asset{j}")).collect()
    }

    /// Row `i` of month `m` is stamped midnight of day `i + 1` of month
    /// `2000-01 + m`.
    pub fn timestamps(&self) -> Vec<chrono::DateTime<Utc>> {
        let base = Month::new(2000, 1).expect("valid month");
        let per = self.params.rows_per_month;
        (0..self.n_months() * per)
            .map(|row| {
                let m = base.offset((row / per) as i64);
                Utc.with_ymd_and_hms(m.year, m.month, 1, 0, 0, 0).unwrap()
                    + Duration::days((row % per) as i64)
            })
            .collect()
    }

    pub fn row_months(&self) -> Vec<Month> {
        let base = Month::new(2000, 1).expect("valid month");
        let per = self.params.rows_per_month;
        (0..self.n_months() * per)
            .map(|row| base.offset((row / per) as i64))
            .collect()
    }

    pub fn months(&self) -> Vec<Month> {
        let base = Month::new(2000, 1).expect("valid month");
        (0..self.n_months() as i64).map(|m| base.offset(m)).collect()
    }

    pub fn to_return_panel(&self) -> Result<ReturnPanel> {
        let rows = self.n_months() * self.params.rows_per_month;
        ReturnPanel::new(
            self.timestamps(),
            self.instruments(),
            self.returns.rows(0, rows).into_owned(),
        )
    }

    /// Truth labels of the rows covered by complete months.
    pub fn row_truth(&self) -> &[bool] {
        &self.true_regime[..self.n_months() * self.params.rows_per_month]
    }

    /// A month is HighVol when more than half of its rows are.
    pub fn monthly_truth(&self) -> RegimeSeries {
        let per = self.params.rows_per_month;
        let labels = self
            .row_truth()
            .chunks(per)
            .map(|c| Regime::from(2 * c.iter().filter(|h| **h).count() > per))
            .collect();
        RegimeSeries {
            detector: crate::regime::Detector::Truth,
            months: self.months(),
            labels,
            transition_values: None,
            warnings: Vec::new(),
        }
    }

    /// Price path `start * exp(cumsum r)` of one asset over the complete
    /// months, one observation per row.
    pub fn prices(&self, asset: usize, start: f64) -> Result<PriceSeries> {
        if asset >= self.n_assets() {
            return Err(Error::invalid(format!("asset {asset} out of range")));
        }
        let mut level = start.ln();
        let points = self
            .timestamps()
            .into_iter()
            .enumerate()
            .map(|(i, ts)| {
                level += self.returns[(i, asset)];
                (ts, level.exp())
            })
            .collect();
        PriceSeries::new(format!("asset{}", asset + 1), points)
    }
}

/// Realised-by-predicted proportions over {Calm, HighVol}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// `cells[realized][predicted]`, index 0 = Calm, 1 = HighVol.
    pub cells: [[f64; 2]; 2],
    pub counts: [[usize; 2]; 2],
    pub total: usize,
    pub accuracy: f64,
    /// Share of all observations that are HighVol but predicted Calm.
    pub highvol_as_calm: f64,
}

pub fn score(predicted: &[Regime], truth: &[bool]) -> Result<ConfusionMatrix> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions vs {} truth labels",
            predicted.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::invalid("nothing to score"));
    }
    let mut counts = [[0usize; 2]; 2];
    for (p, t) in predicted.iter().zip(truth) {
        counts[*t as usize][p.is_high_vol() as usize] += 1;
    }
    let total = truth.len();
    let cells = counts.map(|row| row.map(|c| c as f64 / total as f64));
    Ok(ConfusionMatrix {
        cells,
        counts,
        total,
        accuracy: cells[0][0] + cells[1][1],
        highvol_as_calm: cells[1][0],
    })
}

/// Broadcasts monthly labels to rows and scores them against row truth.
/// Rows in months the detector did not label are left out.
pub fn score_rows(predicted: &RegimeSeries, row_months: &[Month], truth: &[bool]) -> Result<ConfusionMatrix> {
    if row_months.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} row months vs {} truth labels",
            row_months.len(),
            truth.len()
        )));
    }
    let (p, t): (Vec<Regime>, Vec<bool>) = row_months
        .iter()
        .zip(truth)
        .filter_map(|(m, t)| predicted.get(*m).map(|r| (r, *t)))
        .unzip();
    score(&p, &t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use statrs::distribution::{ContinuousCDF, FisherSnedecor};

    #[test]
    fn same_seed_same_data() {
        let p = SyntheticParams::default();
        let a = generate(300, 5, &p, 42).unwrap();
        let b = generate(300, 5, &p, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.returns, generate(300, 5, &p, 43).unwrap().returns);
    }

    #[test]
    fn invariants_hold() {
        let d = generate(500, 5, &SyntheticParams::default(), 1).unwrap();
        let min = d.b_bar.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = d.b_bar.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!((min, max), (0.0, 1.0));
        for (b, h) in d.b_bar.iter().zip(&d.true_regime) {
            assert_eq!(*h, *b > 0.7);
        }
        assert!(d.returns.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn multiplier_only_changes_returns() {
        let base = SyntheticParams::default();
        let one = SyntheticParams {
            shock_multiplier: 1.0,
            ..base.clone()
        };
        let a = generate(400, 3, &base, 9).unwrap();
        let b = generate(400, 3, &one, 9).unwrap();
        assert_eq!(a.b_bar, b.b_bar);
        assert_eq!(a.true_regime, b.true_regime);
        assert_eq!(a.shocks, b.shocks);
        assert_ne!(a.returns, b.returns);
    }

    #[test]
    fn threshold_one_means_all_calm() {
        let p = SyntheticParams {
            threshold: 1.0,
            ..Default::default()
        };
        assert!(generate(200, 2, &p, 3).unwrap().true_regime.iter().all(|h| !h));
    }

    #[test]
    fn first_rows_follow_the_recursion() {
        let p = SyntheticParams::default();
        let d = generate(60, 2, &p, 5).unwrap();
        let z = &d.shocks;
        for j in 0..2 {
            let s2_0 = z[(0, j)] * z[(0, j)];
            let m0 = if d.true_regime[0] { 3.0 } else { 1.0 };
            let r0 = m0 * s2_0 * z[(0, j)];
            assert!((d.returns[(0, j)] - r0).abs() < 1e-15);
            let s2_1 = 0.3 + 0.55 * s2_0;
            let m1 = if d.true_regime[1] { 3.0 } else { 1.0 };
            let r1 = 0.2 * r0 + m1 * s2_1 * z[(1, j)];
            assert!((d.returns[(1, j)] - r1).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = SyntheticParams::default();
        assert!(generate(49, 5, &p, 0).is_err());
        assert!(generate(100, 1, &p, 0).is_err());
        let unit = SyntheticParams { alpha: 1.0, ..p.clone() };
        assert!(generate(100, 5, &unit, 0).is_err());
        let bad_sigma = SyntheticParams {
            sigma_offdiag: 0.5,
            ..p
        };
        assert!(matches!(generate(100, 5, &bad_sigma, 0), Err(Error::NotPsd { .. })));
    }

    fn variance_ratio(d: &SyntheticDataset) -> (f64, usize, usize) {
        let (mut hv, mut calm) = (Vec::new(), Vec::new());
        for i in 0..d.n_rows() {
            let target = if d.true_regime[i] { &mut hv } else { &mut calm };
            target.push(d.returns[(i, 0)]);
        }
        let v = |x: &[f64]| linalg::sample_sd(x).powi(2);
        (v(&hv) / v(&calm), hv.len(), calm.len())
    }

    #[test]
    fn high_vol_rows_are_more_volatile() {
        let ratios: Vec<f64> = (0..100)
            .map(|s| variance_ratio(&generate(2000, 5, &SyntheticParams::default(), s).unwrap()).0)
            .collect();
        assert!(linalg::median(&ratios) > 2.0);
    }

    #[test]
    fn unit_multiplier_removes_the_effect() {
        let p = SyntheticParams {
            shock_multiplier: 1.0,
            ..Default::default()
        };
        let pvalues: Vec<f64> = (0..100)
            .filter_map(|s| {
                let d = generate(2000, 5, &p, s).unwrap();
                let (ratio, nh, nc) = variance_ratio(&d);
                if nh < 2 {
                    return None;
                }
                let f = FisherSnedecor::new((nh - 1) as f64, (nc - 1) as f64).unwrap();
                let upper = f.sf(ratio);
                Some((2.0 * upper.min(1.0 - upper)).min(1.0))
            })
            .collect();
        assert!(linalg::median(&pvalues) > 0.01);
    }

    #[test]
    fn monthly_views() {
        let d = generate(100, 2, &SyntheticParams::default(), 2).unwrap();
        assert_eq!(d.n_months(), 4);
        let panel = d.to_return_panel().unwrap();
        assert_eq!(panel.n_rows(), 84);
        assert_eq!(panel.month_ranges().len(), 4);
        let truth = d.monthly_truth();
        assert_eq!(truth.len(), 4);
        let prices = d.prices(0, 100.0).unwrap();
        assert_eq!(prices.len(), 84);
        assert!((prices.prices()[0] - 100.0 * d.returns[(0, 0)].exp()).abs() < 1e-9);
    }

    #[test]
    fn confusion_examples() {
        let truth = [true, false, false, true];
        let perfect: Vec<Regime> = truth.iter().map(|t| Regime::from(*t)).collect();
        let cm = score(&perfect, &truth).unwrap();
        assert_eq!(cm.accuracy, 1.0);
        assert_eq!((cm.cells[0][1], cm.cells[1][0]), (0.0, 0.0));
        let inverted: Vec<Regime> = truth.iter().map(|t| Regime::from(!*t)).collect();
        let cm = score(&inverted, &truth).unwrap();
        assert_eq!(cm.accuracy, 0.0);
        assert_eq!(cm.highvol_as_calm, 0.5);
        let total: f64 = cm.cells.iter().flatten().sum();
        assert!((total - 1.0).abs() < 1e-10);
        assert!(score(&perfect[..3], &truth).is_err());
    }

    #[test]
    fn row_scoring_skips_unlabelled_months() {
        let m0 = Month::new(2000, 1).unwrap();
        let pred = RegimeSeries {
            detector: crate::regime::Detector::Vlstar,
            months: vec![m0.offset(1)],
            labels: vec![Regime::HighVol],
            transition_values: None,
            warnings: vec![],
        };
        let rows = [m0, m0, m0.offset(1), m0.offset(1)];
        let cm = score_rows(&pred, &rows, &[true, true, true, false]).unwrap();
        assert_eq!(cm.total, 2);
        assert_eq!(cm.accuracy, 0.5);
    }
}
