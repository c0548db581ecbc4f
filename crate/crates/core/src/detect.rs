//! Detector stage: PCA features from monthly realized covariances, then one
//! of the three regime detectors, then the Calm / HighVol mapping.
//!
//! VLSTAR and TVAR work on scores of the raw `vech` covariances, AGNES on
//! scores of the standardised `1 - rho^2` features. All three map regimes by
//! mean covariance trace, so every entry point needs the traces alongside the
//! scores.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cluster::{self, ClusterValidation, Dendrogram, DistanceMetric};
use crate::error::{Error, Result};
use crate::features::{fit_pca, fit_pca_standardized, PcaModel};
use crate::month::Month;
use crate::realized_cov::{DistanceMatrixSeries, RealizedCovSeries};
use crate::regime::RegimeSeries;
use crate::tvar::{self, TvarFit, TvarOptions};
use crate::var::VarDesign;
use crate::vlstar::{self, TransitionVariable, VlstarFit, VlstarOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectOptions {
    pub pca_components: usize,
    pub vlstar: VlstarOptions,
    pub tvar: TvarOptions,
    pub metric: DistanceMetric,
    /// Hopkins sample size; `None` uses `min(T - 1, T / 10)`.
    pub hopkins_sample: Option<usize>,
}

impl Default for DetectOptions {
    fn default() -> Self {
        DetectOptions {
            pca_components: 3,
            vlstar: VlstarOptions::default(),
            tvar: TvarOptions::default(),
            metric: DistanceMetric::Manhattan,
            hopkins_sample: None,
        }
    }
}

/// Month-indexed PCA scores plus the covariance traces used for labelling.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorePanel {
    pub months: Vec<Month>,
    pub names: Vec<String>,
    pub scores: DMatrix<f64>,
    pub traces: Vec<f64>,
}

impl ScorePanel {
    pub fn new(months: Vec<Month>, names: Vec<String>, scores: DMatrix<f64>, traces: Vec<f64>) -> Result<Self> {
        if scores.nrows() != months.len() || traces.len() != months.len() || names.len() != scores.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "scores {}x{}, {} months, {} traces, {} names",
                scores.nrows(),
                scores.ncols(),
                months.len(),
                traces.len(),
                names.len()
            )));
        }
        if months.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("score months must be strictly increasing"));
        }
        Ok(ScorePanel { months, names, scores, traces })
    }

    fn lagged(&self, lags: usize) -> (&[Month], &[f64]) {
        (&self.months[lags.min(self.months.len())..], &self.traces[lags.min(self.traces.len())..])
    }
}

pub fn component_names(k: usize) -> Vec<String> {
    (1..=k).map(|j| format!("pc{j}")).collect()
}

/// PCA of the raw half-vectorised covariances.
pub fn covariance_pca(rcov: &RealizedCovSeries, k: usize) -> Result<(PcaModel, ScorePanel)> {
    let model = fit_pca(&rcov.vech_matrix(), k)?;
    let panel = ScorePanel::new(rcov.months.clone(), component_names(k), model.scores.clone(), rcov.traces())?;
    Ok((model, panel))
}

/// PCA of the standardised `1 - rho^2` features.
pub fn metric_pca(rcov: &RealizedCovSeries, k: usize) -> Result<(PcaModel, ScorePanel)> {
    let dist = DistanceMatrixSeries::from_covariances(rcov)?;
    let header = dist.feature_header();
    let model = fit_pca_standardized(&dist.feature_matrix(), k, Some(&header))?;
    let panel = ScorePanel::new(rcov.months.clone(), component_names(k), model.scores.clone(), rcov.traces())?;
    Ok((model, panel))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VlstarDetection {
    pub fit: VlstarFit,
    pub regimes: RegimeSeries,
}

/// Fits VLSTAR with the lagged scores (and a trend) as transition candidates.
/// The first `lags` months have no fitted value and are not labelled.
pub fn detect_vlstar(panel: &ScorePanel, opts: &VlstarOptions) -> Result<VlstarDetection> {
    let candidates = vlstar::default_candidates(&panel.scores, opts.lags, &panel.names);
    let fit = vlstar::fit_vlstar(&panel.scores, None, &candidates, opts)?;
    let (months, traces) = panel.lagged(opts.lags);
    let mut regimes = vlstar::label_regimes(&fit, traces, months)?;
    regimes.warnings.splice(0..0, fit.warnings.iter().cloned());
    Ok(VlstarDetection { fit, regimes })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TvarDetection {
    pub fit: TvarFit,
    pub regimes: RegimeSeries,
}

/// Transition variable chosen by the linearity test on the VLSTAR design.
pub fn select_transition_variable(panel: &ScorePanel, lags: usize) -> Result<TransitionVariable> {
    let candidates = vlstar::default_candidates(&panel.scores, lags, &panel.names);
    let design = VarDesign::new(&panel.scores, lags, None)?;
    let (best, _) = vlstar::select_transition(&design, &candidates)?;
    Ok(candidates.into_iter().nth(best).expect("index from select_transition"))
}

/// TVAR on the given threshold variable, or on the one the linearity test
/// selects when `threshold` is `None`.
pub fn detect_tvar(
    panel: &ScorePanel,
    threshold: Option<&TransitionVariable>,
    opts: &TvarOptions,
) -> Result<TvarDetection> {
    let selected;
    let threshold = match threshold {
        Some(t) => t,
        None => {
            selected = select_transition_variable(panel, opts.lags)?;
            &selected
        }
    };
    let fit = tvar::fit_tvar(&panel.scores, None, threshold, opts)?;
    let (months, traces) = panel.lagged(opts.lags);
    let regimes = tvar::label_regimes_tvar(&fit, traces, months)?;
    Ok(TvarDetection { fit, regimes })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgnesDetection {
    pub dendrogram: Dendrogram,
    /// Cluster ids `1..=2` from cutting the dendrogram at two clusters.
    pub clusters: Vec<usize>,
    pub validation: ClusterValidation,
    /// Leaf order of the dendrogram and the dissimilarity matrix in that order.
    pub leaf_order: Vec<usize>,
    pub ordered_dissimilarity: DMatrix<f64>,
    pub regimes: RegimeSeries,
}

pub fn detect_agnes(
    panel: &ScorePanel,
    metric: DistanceMetric,
    hopkins_sample: Option<usize>,
    seed: u64,
) -> Result<AgnesDetection> {
    let dendrogram = cluster::agnes(&panel.scores, metric)?;
    let clusters = dendrogram.cut(2)?;
    let validation = cluster::validate(&panel.scores, &clusters, metric, hopkins_sample, seed)?;
    let leaf_order = dendrogram.leaf_order();
    let ordered_dissimilarity = cluster::ordered_dissimilarity(&panel.scores, &leaf_order, metric)?;
    let regimes = cluster::label_regimes_cluster(&clusters, &panel.traces, &panel.months)?;
    Ok(AgnesDetection {
        dendrogram,
        clusters,
        validation,
        leaf_order,
        ordered_dissimilarity,
        regimes,
    })
}

/// All three detectors on one covariance series. TVAR reuses the transition
/// variable VLSTAR selected.
#[derive(Debug, Clone, PartialEq)]
pub struct Detections {
    pub covariance_pca: PcaModel,
    pub metric_pca: PcaModel,
    pub vlstar: VlstarDetection,
    pub tvar: TvarDetection,
    pub agnes: AgnesDetection,
}

pub fn detect_all(rcov: &RealizedCovSeries, opts: &DetectOptions, seed: u64) -> Result<Detections> {
    let (cov_model, cov_panel) = covariance_pca(rcov, opts.pca_components)?;
    let (met_model, met_panel) = metric_pca(rcov, opts.pca_components)?;
    let vl = detect_vlstar(&cov_panel, &opts.vlstar)?;
    let transition = TransitionVariable {
        id: vl.fit.transition_variable_id.clone(),
        values: vl.fit.transition_values.clone(),
    };
    let tv = detect_tvar(&cov_panel, Some(&transition), &opts.tvar)?;
    let ag = detect_agnes(&met_panel, opts.metric, opts.hopkins_sample, seed)?;
    Ok(Detections {
        covariance_pca: cov_model,
        metric_pca: met_model,
        vlstar: vl,
        tvar: tv,
        agnes: ag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::realized_cov::{realized_covariance, RcovOptions};
    use crate::regime::{Detector, Regime};
    use crate::synthetic::{generate, SyntheticParams};

    fn rcov(seed: u64) -> RealizedCovSeries {
        let data = generate(2000, 5, &SyntheticParams::default(), seed).unwrap();
        realized_covariance(&data.to_return_panel().unwrap(), RcovOptions::default()).unwrap().0
    }

    #[test]
    fn detect_all_aligns_outputs() {
        let rc = rcov(3);
        let d = detect_all(&rc, &DetectOptions::default(), 11).unwrap();
        assert_eq!(d.vlstar.regimes.detector, Detector::Vlstar);
        assert_eq!(d.vlstar.regimes.months, rc.months[1..]);
        assert_eq!(d.tvar.regimes.months, rc.months[1..]);
        assert_eq!(d.agnes.regimes.months, rc.months);
        assert_eq!(d.tvar.fit.threshold_variable_id, d.vlstar.fit.transition_variable_id);
        assert_eq!(d.agnes.clusters.len(), rc.len());
        assert_eq!(d.agnes.ordered_dissimilarity.shape(), (rc.len(), rc.len()));
        assert_eq!(d.covariance_pca.n_components(), 3);
    }

    #[test]
    fn highvol_side_has_larger_mean_trace() {
        let rc = rcov(5);
        let traces = rc.traces();
        let d = detect_all(&rc, &DetectOptions::default(), 1).unwrap();
        for series in [&d.vlstar.regimes, &d.tvar.regimes, &d.agnes.regimes] {
            let offset = rc.len() - series.len();
            let mean = |r: Regime| {
                let v: Vec<f64> = series
                    .labels
                    .iter()
                    .zip(&traces[offset..])
                    .filter(|(l, _)| **l == r)
                    .map(|(_, t)| *t)
                    .collect();
                v.iter().sum::<f64>() / v.len() as f64
            };
            if series.labels.contains(&Regime::HighVol) {
                assert!(mean(Regime::HighVol) > mean(Regime::Calm));
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let rc = rcov(8);
        let a = detect_all(&rc, &DetectOptions::default(), 4).unwrap();
        let b = detect_all(&rc, &DetectOptions::default(), 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn score_panel_rejects_misaligned_input() {
        let months: Vec<Month> = (0..3).map(|i| Month::new(2000, 1).unwrap().offset(i)).collect();
        let scores = DMatrix::zeros(3, 2);
        assert!(ScorePanel::new(months.clone(), component_names(2), scores.clone(), vec![1.0; 2]).is_err());
        assert!(ScorePanel::new(months.clone(), component_names(3), scores.clone(), vec![1.0; 3]).is_err());
        let mut rev = months.clone();
        rev.reverse();
        assert!(ScorePanel::new(rev, component_names(2), scores, vec![1.0; 3]).is_err());
    }
}
