//! Two-regime threshold VAR baseline.
//!
//! Rows whose threshold value is at most `c` follow the lower VAR, the rest
//! the upper VAR. `c` is chosen on a grid of trimmed empirical quantiles by
//! minimising the total SSR of the two per-regime OLS fits.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::month::Month;
use crate::regime::{label_two_groups, Detector, RegimeSeries};
use crate::var::{fit_var, VarCoefficients, VarDesign};
use crate::vlstar::TransitionVariable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TvarOptions {
    pub lags: usize,
    /// Minimum share of observations each regime must keep.
    pub trim: f64,
    /// Number of quantile candidates spread evenly over `[trim, 1 - trim]`.
    pub candidates: usize,
}

impl Default for TvarOptions {
    fn default() -> Self {
        TvarOptions {
            lags: 1,
            trim: 0.1,
            candidates: 81,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvarFit {
    pub lags: usize,
    pub threshold: f64,
    pub threshold_variable_id: String,
    pub lower: VarCoefficients,
    pub upper: VarCoefficients,
    pub ssr: f64,
    /// `true` where the threshold variable exceeds the threshold.
    pub regime_indicator: Vec<bool>,
    /// `(threshold, ssr)` for every admissible candidate.
    pub ssr_profile: Vec<(f64, f64)>,
    pub skipped_candidates: usize,
}

struct Split {
    ssr: f64,
    lower: VarCoefficients,
    upper: VarCoefficients,
}

fn fit_split(design: &VarDesign, upper: &[bool], min_rows: usize) -> Result<Option<Split>> {
    let n_upper = upper.iter().filter(|u| **u).count();
    let n_lower = upper.len() - n_upper;
    let floor = min_rows.max(design.regressors() + 1);
    if n_upper < floor || n_lower < floor {
        return Ok(None);
    }
    let subset = |flag: bool| -> Result<(VarCoefficients, f64)> {
        let rows: Vec<usize> = (0..upper.len()).filter(|&r| upper[r] == flag).collect();
        let x = design.base.select_rows(&rows);
        let y = design.targets.select_rows(&rows);
        let ls = linalg::least_squares(&x, &y)?;
        Ok((
            VarCoefficients::from_stacked(&ls.coefficients, 0, design.n, design.lags, design.k),
            ls.ssr(),
        ))
    };
    let (lower, ssr_lo) = subset(false)?;
    let (upper, ssr_hi) = subset(true)?;
    Ok(Some(Split {
        ssr: ssr_lo + ssr_hi,
        lower,
        upper,
    }))
}

fn check_inputs(y: &DMatrix<f64>, design: &VarDesign, threshold: &TransitionVariable) -> Result<()> {
    let (t, n) = y.shape();
    if t <= 20 * n {
        return Err(Error::TooShort {
            what: "TVAR".into(),
            needed: 20 * n + 1,
            got: t,
        });
    }
    if threshold.values.len() != design.rows() {
        return Err(Error::DimensionMismatch(format!(
            "threshold variable has {} values, effective sample has {}",
            threshold.values.len(),
            design.rows()
        )));
    }
    if threshold.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("threshold variable has non-finite values"));
    }
    Ok(())
}

fn search(
    design: &VarDesign,
    threshold: &TransitionVariable,
    trim: f64,
    candidates: &[(f64, f64)],
) -> Result<TvarFit> {
    let rows = design.rows();
    let min_rows = (trim * rows as f64).ceil() as usize;
    let mut best: Option<(f64, f64, Split)> = None;
    let mut profile = Vec::new();
    let mut skipped = 0;
    for &(reported, cut) in candidates {
        let upper: Vec<bool> = threshold.values.iter().map(|s| *s > cut).collect();
        match fit_split(design, &upper, min_rows)? {
            Some(split) => {
                profile.push((reported, split.ssr));
                if best.as_ref().is_none_or(|(_, _, b)| split.ssr < b.ssr) {
                    best = Some((reported, cut, split));
                }
            }
            None => skipped += 1,
        }
    }
    let Some((c, cut, split)) = best else {
        return Err(Error::NoAdmissibleThreshold(format!(
            "all {} candidates leave a regime below the {:.0}% floor",
            candidates.len(),
            trim * 100.0
        )));
    };
    Ok(TvarFit {
        lags: design.lags,
        threshold: c,
        threshold_variable_id: threshold.id.clone(),
        lower: split.lower,
        upper: split.upper,
        ssr: split.ssr,
        regime_indicator: threshold.values.iter().map(|s| *s > cut).collect(),
        ssr_profile: profile,
        skipped_candidates: skipped,
    })
}

/// Grid search over quantiles of the threshold variable. The split for a
/// quantile is taken at the order statistic just below it, which is the
/// same split as `s <= c` but immune to rounding of the interpolated value.
pub fn fit_tvar(
    y: &DMatrix<f64>,
    exog: Option<&DMatrix<f64>>,
    threshold: &TransitionVariable,
    opts: &TvarOptions,
) -> Result<TvarFit> {
    if !(0.0..0.5).contains(&opts.trim) || opts.candidates == 0 {
        return Err(Error::invalid("trim must lie in [0, 0.5) with at least one candidate"));
    }
    let design = VarDesign::new(y, opts.lags, exog)?;
    check_inputs(y, &design, threshold)?;
    let mut sorted = threshold.values.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let levels: Vec<f64> = if opts.candidates == 1 {
        vec![0.5]
    } else {
        (0..opts.candidates)
            .map(|i| opts.trim + (1.0 - 2.0 * opts.trim) * i as f64 / (opts.candidates - 1) as f64)
            .collect()
    };
    let candidates: Vec<(f64, f64)> = levels
        .iter()
        .map(|q| {
            let c = linalg::quantile_sorted(&sorted, *q);
            let lo = ((n - 1) as f64 * q).floor() as usize;
            (c, sorted[lo])
        })
        .collect();
    search(&design, threshold, opts.trim, &candidates)
}

/// Grid search over explicit candidate thresholds.
pub fn fit_tvar_with_candidates(
    y: &DMatrix<f64>,
    exog: Option<&DMatrix<f64>>,
    threshold: &TransitionVariable,
    candidates: &[f64],
    opts: &TvarOptions,
) -> Result<TvarFit> {
    let design = VarDesign::new(y, opts.lags, exog)?;
    check_inputs(y, &design, threshold)?;
    let pairs: Vec<(f64, f64)> = candidates.iter().map(|c| (*c, *c)).collect();
    search(&design, threshold, opts.trim, &pairs)
}

/// SSR of the one-regime VAR on the same design, for comparison.
pub fn linear_ssr(y: &DMatrix<f64>, exog: Option<&DMatrix<f64>>, lags: usize) -> Result<f64> {
    Ok(fit_var(&VarDesign::new(y, lags, exog)?)?.ssr)
}

/// Months whose indicator is set form one group; the group with the larger
/// mean covariance trace is HighVol.
pub fn label_regimes_tvar(fit: &TvarFit, traces: &[f64], months: &[Month]) -> Result<RegimeSeries> {
    if months.len() != fit.regime_indicator.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} months vs {} indicator values",
            months.len(),
            fit.regime_indicator.len()
        )));
    }
    let labeling = label_two_groups(&fit.regime_indicator, traces)?;
    Ok(RegimeSeries {
        detector: Detector::Tvar,
        months: months.to_vec(),
        labels: labeling.labels,
        transition_values: None,
        warnings: labeling.warnings,
    })
}
