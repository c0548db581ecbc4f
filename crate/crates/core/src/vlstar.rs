//! Two-regime vector logistic smooth transition autoregression.
//!
//! `y_t = mu0 + sum_j phi0_j y_{t-j} + A0 x_t
//!       + G_t (mu1 + sum_j phi1_j y_{t-j} + A1 x_t) + e_t`
//! with one logistic transition `G_t = 1 / (1 + exp(-gamma (s_t - c)))`
//! shared by every equation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::linalg;
use crate::month::Month;
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::regime::{label_two_groups, Detector, RegimeSeries};
use crate::var::{fit_var, VarCoefficients, VarDesign};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub gamma: f64,
    pub c: f64,
}

impl LogisticParams {
    /// `gamma = 0` is accepted and yields the linear model.
    pub fn new(gamma: f64, c: f64) -> Result<Self> {
        if !(gamma >= 0.0) || !gamma.is_finite() || !c.is_finite() {
            return Err(Error::invalid(format!(
                "logistic parameters must be finite with gamma >= 0 (gamma = {gamma}, c = {c})"
            )));
        }
        Ok(LogisticParams { gamma, c })
    }
}

pub fn logistic_g(s: f64, params: LogisticParams) -> f64 {
    let z = params.gamma * (s - params.c);
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// A candidate transition variable, aligned with the effective sample
/// (one value per row of the VAR design, i.e. `T - p` values).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionVariable {
    pub id: String,
    pub values: Vec<f64>,
}

/// A linear trend plus the first lag of every score column.
pub fn default_candidates(y: &DMatrix<f64>, lags: usize, names: &[String]) -> Vec<TransitionVariable> {
    let t = y.nrows();
    let mut out = vec![TransitionVariable {
        id: "trend".into(),
        values: (lags..t).map(|i| i as f64).collect(),
    }];
    for j in 0..y.ncols() {
        let name = names
            .get(j)
            .cloned()
            .unwrap_or_else(|| format!("pc{}", j + 1));
        out.push(TransitionVariable {
            id: format!("{name}_lag1"),
            values: (lags..t).map(|i| y[(i - 1, j)]).collect(),
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearityTest {
    pub candidate: String,
    pub wilks_lambda: f64,
    pub statistic: f64,
    pub df1: f64,
    pub df2: f64,
    pub p_value: f64,
    /// Interaction columns kept after dropping collinear ones.
    pub auxiliary_columns: usize,
}

fn standardize_values(values: &[f64], id: &str) -> Result<(Vec<f64>, f64, f64)> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("transition variable `{id}` has non-finite values")));
    }
    let mean = linalg::mean(values);
    let sd = linalg::sample_sd(values);
    if !(sd > 1e-12 * (1.0 + mean.abs())) {
        return Err(Error::RankDeficient(format!(
            "transition variable `{id}` is constant"
        )));
    }
    Ok((values.iter().map(|v| (v - mean) / sd).collect(), mean, sd))
}

/// Orthogonalises `columns` in order and returns the indices that add a new
/// direction. `required` leading columns must all be independent.
fn independent_columns(columns: &[DVector<f64>], required: usize) -> Result<Vec<usize>> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut kept = Vec::new();
    for (idx, col) in columns.iter().enumerate() {
        let norm = col.norm();
        let mut r = col.clone();
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dot(&r);
                r.axpy(-proj, q, 1.0);
            }
        }
        let rn = r.norm();
        if norm > 0.0 && rn > 1e-9 * norm {
            basis.push(r / rn);
            kept.push(idx);
        } else if idx < required {
            return Err(Error::RankDeficient(format!(
                "base regressor {idx} is collinear with earlier columns"
            )));
        }
    }
    Ok(kept)
}

/// Third-order Taylor (LM3-type) linearity test against one candidate.
///
/// The linear VAR residuals are regressed on the base regressors plus their
/// products with `s`, `s^2`, `s^3` (standardised `s`). Wilks' lambda of the
/// two residual cross-product matrices is turned into a p-value through
/// Rao's F approximation.
pub fn linearity_test(design: &VarDesign, candidate: &TransitionVariable) -> Result<LinearityTest> {
    let rows = design.rows();
    if candidate.values.len() != rows {
        return Err(Error::DimensionMismatch(format!(
            "candidate `{}` has {} values, effective sample has {rows}",
            candidate.id,
            candidate.values.len()
        )));
    }
    let (s, _, _) = standardize_values(&candidate.values, &candidate.id)?;
    let m = design.regressors();
    let mut columns: Vec<DVector<f64>> = (0..m).map(|j| design.base.column(j).into_owned()).collect();
    for power in 1..=3 {
        for j in 0..m {
            columns.push(DVector::from_fn(rows, |r, _| {
                design.base[(r, j)] * s[r].powi(power)
            }));
        }
    }
    let kept = independent_columns(&columns, m)?;
    let q = kept.len() - m;
    if q == 0 {
        return Err(Error::RankDeficient(format!(
            "candidate `{}` adds no independent interaction terms",
            candidate.id
        )));
    }
    if rows <= 4 * (m + q) {
        return Err(Error::TooShort {
            what: format!("linearity test for `{}`", candidate.id),
            needed: 4 * (m + q) + 1,
            got: rows,
        });
    }
    let aux = DMatrix::from_columns(&kept.iter().map(|&i| columns[i].clone()).collect::<Vec<_>>());

    let restricted = linalg::least_squares(&design.base, &design.targets)?;
    let full = linalg::least_squares(&aux, &restricted.residuals)?;
    let s0 = restricted.residuals.transpose() * &restricted.residuals;
    let s1 = full.residuals.transpose() * &full.residuals;
    let (ld0, ld1) = match (linalg::ln_det_spd(&s0), linalg::ln_det_spd(&s1)) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::RankDeficient(
                "residual cross-product matrix is singular".into(),
            ))
        }
    };
    let lambda = (ld1 - ld0).exp().min(1.0);

    let p = design.n as f64;
    let qf = q as f64;
    let denom = p * p + qf * qf - 5.0;
    let rao_s = if denom > 0.0 {
        ((p * p * qf * qf - 4.0) / denom).sqrt()
    } else {
        1.0
    };
    let nu_e = (rows - m - q) as f64;
    let mr = nu_e - (p - qf + 1.0) / 2.0;
    let df1 = p * qf;
    let df2 = mr * rao_s - p * qf / 2.0 + 1.0;
    if !(df2 > 0.0) {
        return Err(Error::TooShort {
            what: "linearity test degrees of freedom".into(),
            needed: 4 * (m + q) + 1,
            got: rows,
        });
    }
    let root = lambda.powf(1.0 / rao_s);
    let statistic = ((1.0 - root) / root) * df2 / df1;
    let dist = FisherSnedecor::new(df1, df2)
        .map_err(|e| Error::invalid(format!("F distribution: {e}")))?;
    let p_value = dist.sf(statistic).clamp(0.0, 1.0);
    Ok(LinearityTest {
        candidate: candidate.id.clone(),
        wilks_lambda: lambda,
        statistic,
        df1,
        df2,
        p_value,
        auxiliary_columns: q,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VlstarOptions {
    pub lags: usize,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub gamma_points: usize,
    /// Quantile levels of the standardised transition variable used as the
    /// location grid.
    pub location_quantiles: Vec<f64>,
    pub significance: f64,
    pub refine: bool,
    pub max_evaluations: usize,
}

impl Default for VlstarOptions {
    fn default() -> Self {
        VlstarOptions {
            lags: 1,
            gamma_min: 0.1,
            gamma_max: 100.0,
            gamma_points: 30,
            location_quantiles: (1..=9).map(|i| i as f64 / 10.0).collect(),
            significance: 0.05,
            refine: true,
            max_evaluations: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VlstarFit {
    pub lags: usize,
    /// Regime-0 block (`mu0`, `phi0_j`, `A0`).
    pub regime0: VarCoefficients,
    /// Increment switched on by `G_t` (`mu1`, `phi1_j`, `A1`).
    pub regime1: VarCoefficients,
    /// In the units of the raw transition variable.
    pub logistic: LogisticParams,
    /// In standardised units (what the grid and `gamma_max` refer to).
    pub logistic_standardized: LogisticParams,
    pub transition_variable_id: String,
    pub transition_mean: f64,
    pub transition_sd: f64,
    pub transition_values: Vec<f64>,
    pub g_values: Vec<f64>,
    pub residuals: DMatrix<f64>,
    pub ssr: f64,
    pub linearity_tests: Vec<LinearityTest>,
    /// False when the local refinement hit its evaluation budget.
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl VlstarFit {
    pub fn mu0(&self) -> &DVector<f64> {
        &self.regime0.mu
    }

    pub fn mu1(&self) -> &DVector<f64> {
        &self.regime1.mu
    }
}

struct Profile {
    coefficients: DMatrix<f64>,
    residuals: DMatrix<f64>,
    ssr: f64,
}

fn profile(design: &VarDesign, g: &[f64]) -> Result<Profile> {
    let m = design.regressors();
    let rows = design.rows();
    let x = DMatrix::from_fn(rows, 2 * m, |r, c| {
        if c < m {
            design.base[(r, c)]
        } else {
            g[r] * design.base[(r, c - m)]
        }
    });
    let ls = linalg::least_squares(&x, &design.targets)?;
    Ok(Profile {
        ssr: ls.ssr(),
        coefficients: ls.coefficients,
        residuals: ls.residuals,
    })
}

fn profile_ssr(design: &VarDesign, s: &[f64], params: LogisticParams) -> f64 {
    let g: Vec<f64> = s.iter().map(|v| logistic_g(*v, params)).collect();
    profile(design, &g).map(|p| p.ssr).unwrap_or(f64::INFINITY)
}

fn check_sample(y: &DMatrix<f64>, lags: usize) -> Result<()> {
    let (t, n) = y.shape();
    let needed = 10 * n * (lags + 1) + 1;
    if t < needed {
        return Err(Error::TooShort {
            what: "VLSTAR".into(),
            needed,
            got: t,
        });
    }
    for j in 0..n {
        let col: Vec<f64> = y.column(j).iter().copied().collect();
        if !(linalg::sample_sd(&col) > 0.0) {
            return Err(Error::ZeroVariance(format!("score column {j}")));
        }
    }
    Ok(())
}

/// Fits the model with the logistic parameters held fixed (raw units of
/// the transition variable). `gamma = 0` reproduces the linear VAR.
pub fn fit_vlstar_fixed(
    y: &DMatrix<f64>,
    exog: Option<&DMatrix<f64>>,
    lags: usize,
    transition: &TransitionVariable,
    params: LogisticParams,
) -> Result<VlstarFit> {
    let design = VarDesign::new(y, lags, exog)?;
    if transition.values.len() != design.rows() {
        return Err(Error::DimensionMismatch(format!(
            "transition variable has {} values, effective sample has {}",
            transition.values.len(),
            design.rows()
        )));
    }
    let params = LogisticParams::new(params.gamma, params.c)?;
    let mean = linalg::mean(&transition.values);
    let sd = linalg::sample_sd(&transition.values);
    let standardized = LogisticParams {
        gamma: params.gamma * sd,
        c: if sd > 0.0 { (params.c - mean) / sd } else { 0.0 },
    };
    assemble(&design, transition, params, standardized, mean, sd, Vec::new(), true, Vec::new())
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    design: &VarDesign,
    transition: &TransitionVariable,
    params: LogisticParams,
    standardized: LogisticParams,
    mean: f64,
    sd: f64,
    linearity_tests: Vec<LinearityTest>,
    converged: bool,
    warnings: Vec<String>,
) -> Result<VlstarFit> {
    let (n, lags, k) = (design.n, design.lags, design.k);
    let m = design.regressors();
    let (regime0, regime1, g_values, residuals, ssr) = if params.gamma == 0.0 {
        let lin = fit_var(design)?;
        (
            lin.coefficients,
            VarCoefficients::zeros(n, lags, k),
            vec![0.5; design.rows()],
            lin.residuals,
            lin.ssr,
        )
    } else {
        let g: Vec<f64> = transition.values.iter().map(|v| logistic_g(*v, params)).collect();
        let p = profile(design, &g)?;
        (
            VarCoefficients::from_stacked(&p.coefficients, 0, n, lags, k),
            VarCoefficients::from_stacked(&p.coefficients, m, n, lags, k),
            g,
            p.residuals,
            p.ssr,
        )
    };
    Ok(VlstarFit {
        lags,
        regime0,
        regime1,
        logistic: params,
        logistic_standardized: standardized,
        transition_variable_id: transition.id.clone(),
        transition_mean: mean,
        transition_sd: sd,
        transition_values: transition.values.clone(),
        g_values,
        residuals,
        ssr,
        linearity_tests,
        converged,
        warnings,
    })
}

/// Runs the linearity test on every candidate and returns the index of the
/// one with the lowest p-value (ties: larger statistic, then earlier).
pub fn select_transition(
    design: &VarDesign,
    candidates: &[TransitionVariable],
) -> Result<(usize, Vec<LinearityTest>)> {
    if candidates.is_empty() {
        return Err(Error::invalid("no transition-variable candidates"));
    }
    let tests = candidates
        .iter()
        .map(|c| linearity_test(design, c))
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, t) in tests.iter().enumerate().skip(1) {
        let b = &tests[best];
        if t.p_value < b.p_value || (t.p_value == b.p_value && t.statistic > b.statistic) {
            best = i;
        }
    }
    Ok((best, tests))
}

/// Selects the transition variable, grid-searches `(gamma, c)` on the
/// standardised transition variable and refines the best grid point with
/// Nelder-Mead on `(ln gamma, c)`. The lowest SSR seen anywhere is returned.
pub fn fit_vlstar(
    y: &DMatrix<f64>,
    exog: Option<&DMatrix<f64>>,
    candidates: &[TransitionVariable],
    opts: &VlstarOptions,
) -> Result<VlstarFit> {
    check_sample(y, opts.lags)?;
    if !(opts.gamma_min > 0.0 && opts.gamma_max >= opts.gamma_min) || opts.gamma_points == 0 {
        return Err(Error::invalid("gamma grid must satisfy 0 < gamma_min <= gamma_max"));
    }
    if opts.location_quantiles.is_empty()
        || opts.location_quantiles.iter().any(|q| !(0.0..=1.0).contains(q))
    {
        return Err(Error::invalid("location quantiles must lie in [0, 1]"));
    }
    let design = VarDesign::new(y, opts.lags, exog)?;
    let (chosen, tests) = select_transition(&design, candidates)?;
    let transition = &candidates[chosen];
    let mut warnings = Vec::new();
    if tests[chosen].p_value > opts.significance {
        warnings.push(format!(
            "no candidate rejects linearity at {}; using `{}` (p = {:.4})",
            opts.significance, transition.id, tests[chosen].p_value
        ));
    }
    let (s, mean, sd) = standardize_values(&transition.values, &transition.id)?;
    let (s_lo, s_hi) = s
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));

    let gammas = linalg::log_space(opts.gamma_min, opts.gamma_max, opts.gamma_points);
    let mut sorted = s.clone();
    sorted.sort_by(f64::total_cmp);
    let locations: Vec<f64> = opts
        .location_quantiles
        .iter()
        .map(|q| linalg::quantile_sorted(&sorted, *q))
        .collect();

    let mut best = (LogisticParams { gamma: gammas[0], c: locations[0] }, f64::INFINITY);
    for &gamma in &gammas {
        for &c in &locations {
            let params = LogisticParams { gamma, c };
            let ssr = profile_ssr(&design, &s, params);
            if ssr < best.1 {
                best = (params, ssr);
            }
        }
    }
    if !best.1.is_finite() {
        return Err(Error::RankDeficient("every grid point failed to fit".into()));
    }

    let mut converged = true;
    if opts.refine {
        let ln_lo = (opts.gamma_min * 1e-2).ln();
        let ln_hi = opts.gamma_max.ln();
        let clamp = |x: &[f64]| LogisticParams {
            gamma: x[0].clamp(ln_lo, ln_hi).exp(),
            c: x[1].clamp(s_lo, s_hi),
        };
        let mut path_best = best;
        let result = nelder_mead(
            |x| {
                let params = clamp(x);
                let ssr = profile_ssr(&design, &s, params);
                if ssr < path_best.1 {
                    path_best = (params, ssr);
                }
                ssr
            },
            &[best.0.gamma.ln(), best.0.c],
            &NelderMeadOptions {
                max_evaluations: opts.max_evaluations,
                ..Default::default()
            },
        );
        best = path_best;
        if !result.converged {
            converged = false;
            warnings.push(format!(
                "refinement stopped after {} evaluations without converging",
                result.evaluations
            ));
        }
    }

    let standardized = best.0;
    let raw = LogisticParams {
        gamma: standardized.gamma / sd,
        c: mean + sd * standardized.c,
    };
    let mut fit = assemble(
        &design,
        transition,
        raw,
        standardized,
        mean,
        sd,
        tests,
        converged,
        warnings,
    )?;
    // Recompute G on the standardised scale so it matches the search exactly.
    let g: Vec<f64> = s.iter().map(|v| logistic_g(*v, standardized)).collect();
    let p = profile(&design, &g)?;
    let m = design.regressors();
    fit.regime0 = VarCoefficients::from_stacked(&p.coefficients, 0, design.n, design.lags, design.k);
    fit.regime1 = VarCoefficients::from_stacked(&p.coefficients, m, design.n, design.lags, design.k);
    fit.g_values = g;
    fit.residuals = p.residuals;
    fit.ssr = p.ssr;
    Ok(fit)
}

/// Thresholds `G_t` at 0.5 (0.5 itself belongs to the lower regime) and
/// names the side with the larger mean covariance trace HighVol.
/// `traces` and `months` are aligned with `fit.g_values`.
pub fn label_regimes(fit: &VlstarFit, traces: &[f64], months: &[Month]) -> Result<RegimeSeries> {
    if months.len() != fit.g_values.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} months vs {} transition values",
            months.len(),
            fit.g_values.len()
        )));
    }
    let upper: Vec<bool> = fit.g_values.iter().map(|g| *g > 0.5).collect();
    let labeling = label_two_groups(&upper, traces)?;
    Ok(RegimeSeries {
        detector: Detector::Vlstar,
        months: months.to_vec(),
        labels: labeling.labels,
        transition_values: Some(fit.g_values.clone()),
        warnings: labeling.warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regime::Regime;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn logistic_examples() {
        let p = LogisticParams::new(3.0, 0.7).unwrap();
        assert_eq!(logistic_g(0.7, p), 0.5);
        let g = logistic_g(1.0, LogisticParams::new(2.0, 0.0).unwrap());
        assert!((g - 1.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-15);
        assert!((g - 0.880797).abs() < 1e-6);
        assert!(logistic_g(0.01, LogisticParams::new(1e6, 0.0).unwrap()) > 1.0 - 1e-12);
        assert!(logistic_g(-1e4, LogisticParams::new(1e6, 0.0).unwrap()) >= 0.0);
        assert!(LogisticParams::new(-1.0, 0.0).is_err());
        assert!(LogisticParams::new(1.0, f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn logistic_symmetry_and_monotonicity(
            gamma in 0.01f64..50.0, c in -5.0f64..5.0, d in 0.0f64..3.0, e in 0.001f64..1.0
        ) {
            let p = LogisticParams::new(gamma, c).unwrap();
            prop_assert!((logistic_g(c + d, p) + logistic_g(c - d, p) - 1.0).abs() < 1e-12);
            let (a, b) = (logistic_g(c + d - e, p), logistic_g(c + d, p));
            prop_assert!(a <= b);
            if gamma * (d + 0.5) < 30.0 {
                prop_assert!(a < b);
            }
        }
    }

    /// Two-regime DGP with the transition on the lagged first score.
    pub(crate) fn simulate(t: usize, gamma: f64, c: f64, seed: u64) -> (DMatrix<f64>, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let burn = 200;
        let mu0 = [0.3, -0.2];
        let mu1 = [-0.6, 0.5];
        let phi0 = [[0.6, 0.1], [0.0, 0.4]];
        let phi1 = [[-0.7, 0.0], [0.3, -0.3]];
        let mut prev = [0.0f64, 0.0];
        let mut y = DMatrix::zeros(t, 2);
        let mut ssr = 0.0;
        for step in 0..burn + t {
            let g = logistic_g(prev[0], LogisticParams { gamma, c });
            let mut next = [0.0; 2];
            for i in 0..2 {
                let e: f64 = StandardNormal.sample(&mut rng);
                next[i] = mu0[i]
                    + g * mu1[i]
                    + (0..2).map(|j| (phi0[i][j] + g * phi1[i][j]) * prev[j]).sum::<f64>()
                    + e;
                if step > burn {
                    ssr += e * e;
                }
            }
            if step >= burn {
                y[(step - burn, 0)] = next[0];
                y[(step - burn, 1)] = next[1];
            }
            prev = next;
        }
        (y, ssr)
    }

    fn lag1_candidate(y: &DMatrix<f64>) -> TransitionVariable {
        TransitionVariable {
            id: "pc1_lag1".into(),
            values: (1..y.nrows()).map(|i| y[(i - 1, 0)]).collect(),
        }
    }

    fn linear_var(t: usize, seed: u64) -> DMatrix<f64> {
        let (y, _) = simulate(t, 0.0, 0.0, seed);
        y
    }

    #[test]
    fn gamma_zero_matches_var_ols() {
        let (y, _) = simulate(300, 5.0, 0.0, 1);
        let cand = lag1_candidate(&y);
        let fit = fit_vlstar_fixed(&y, None, 1, &cand, LogisticParams::new(0.0, 0.0).unwrap())
            .unwrap();
        // independent oracle: normal equations
        let d = VarDesign::new(&y, 1, None).unwrap();
        let xtx = d.base.transpose() * &d.base;
        let b = xtx.cholesky().unwrap().solve(&(d.base.transpose() * &d.targets));
        assert!((fit.regime0.mu.clone() - b.row(0).transpose()).abs().max() < 1e-6);
        assert!((fit.regime0.phi[0].clone() - b.rows(1, 2).transpose()).abs().max() < 1e-6);
        assert_eq!(fit.regime1.mu.amax(), 0.0);
        assert!(fit.g_values.iter().all(|g| *g == 0.5));
    }

    #[test]
    fn fitted_ssr_not_above_linear() {
        for seed in 0..5 {
            let (y, _) = simulate(200, 5.0, 0.0, seed);
            let d = VarDesign::new(&y, 1, None).unwrap();
            let lin = fit_var(&d).unwrap();
            let cands = default_candidates(&y, 1, &[]);
            let fit = fit_vlstar(&y, None, &cands, &VlstarOptions::default()).unwrap();
            assert!(fit.ssr <= lin.ssr + 1e-8, "{} > {}", fit.ssr, lin.ssr);
            assert!(fit.g_values.iter().all(|g| (0.0..=1.0).contains(g)));
            let resid_ss: f64 = fit.residuals.iter().map(|e| e * e).sum();
            assert!((resid_ss - fit.ssr).abs() < 1e-9 * (1.0 + fit.ssr));
        }
    }

    #[test]
    fn negating_transition_swaps_regimes() {
        let (y, _) = simulate(250, 5.0, 0.0, 3);
        let cand = lag1_candidate(&y);
        let neg = TransitionVariable {
            id: "neg".into(),
            values: cand.values.iter().map(|v| -v).collect(),
        };
        let a = fit_vlstar_fixed(&y, None, 1, &cand, LogisticParams::new(4.0, 0.3).unwrap()).unwrap();
        let b = fit_vlstar_fixed(&y, None, 1, &neg, LogisticParams::new(4.0, -0.3).unwrap()).unwrap();
        assert!((a.ssr - b.ssr).abs() < 1e-8);
        for (ga, gb) in a.g_values.iter().zip(&b.g_values) {
            assert!((ga + gb - 1.0).abs() < 1e-12);
        }
        // b's regime 0 is a's regime 1 (mu0 + mu1) and vice versa
        let a_upper = &a.regime0.mu + &a.regime1.mu;
        let b_upper = &b.regime0.mu + &b.regime1.mu;
        assert!((&b.regime0.mu - a_upper).abs().max() < 1e-6);
        assert!((b_upper - &a.regime0.mu).abs().max() < 1e-6);
        let a_phi_upper = &a.regime0.phi[0] + &a.regime1.phi[0];
        assert!((&b.regime0.phi[0] - a_phi_upper).abs().max() < 1e-6);
    }

    #[test]
    fn recovers_location() {
        let mut c_err = Vec::new();
        let mut ratio = Vec::new();
        for seed in 0..50 {
            let (y, true_ssr) = simulate(1000, 5.0, 0.0, 100 + seed);
            let cand = lag1_candidate(&y);
            let fit = fit_vlstar(&y, None, &[cand], &VlstarOptions::default()).unwrap();
            c_err.push(fit.logistic.c.abs());
            ratio.push(fit.ssr / true_ssr);
            assert!(fit.logistic.gamma > 0.0);
        }
        let med_c = linalg::median(&c_err);
        let med_r = linalg::median(&ratio);
        assert!(med_c <= 0.15, "median |c| error {med_c}");
        assert!(med_r <= 1.05, "median SSR ratio {med_r}");
    }

    #[test]
    fn selection_prefers_true_transition() {
        let mut hits = 0;
        for seed in 0..20 {
            let (y, _) = simulate(500, 20.0, 0.0, 500 + seed);
            let d = VarDesign::new(&y, 1, None).unwrap();
            let cands = default_candidates(&y, 1, &["pc1".into(), "pc2".into()]);
            let (best, tests) = select_transition(&d, &cands).unwrap();
            assert_eq!(tests.len(), 3);
            if cands[best].id == "pc1_lag1" {
                hits += 1;
            }
        }
        assert!(hits >= 18, "{hits}/20");
    }

    #[test]
    fn linearity_test_size() {
        let mut rejections = 0;
        for seed in 0..200 {
            let y = linear_var(500, 10_000 + seed);
            let d = VarDesign::new(&y, 1, None).unwrap();
            let t = linearity_test(&d, &lag1_candidate(&y)).unwrap();
            assert!((0.0..=1.0).contains(&t.p_value));
            if t.p_value < 0.05 {
                rejections += 1;
            }
        }
        let rate = rejections as f64 / 200.0;
        assert!((0.02..=0.09).contains(&rate), "size {rate}");
    }

    #[test]
    fn linearity_test_power() {
        let mut rejections = 0;
        for seed in 0..200 {
            let (y, _) = simulate(500, 20.0, 0.0, 20_000 + seed);
            let d = VarDesign::new(&y, 1, None).unwrap();
            if linearity_test(&d, &lag1_candidate(&y)).unwrap().p_value < 0.05 {
                rejections += 1;
            }
        }
        assert!(rejections > 180, "power {rejections}/200");
    }

    #[test]
    fn constant_candidate_is_rank_deficient() {
        let y = linear_var(200, 4);
        let d = VarDesign::new(&y, 1, None).unwrap();
        let flat = TransitionVariable {
            id: "flat".into(),
            values: vec![2.0; d.rows()],
        };
        assert!(matches!(linearity_test(&d, &flat), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn zero_variance_and_short_inputs_fail() {
        let y = DMatrix::from_fn(100, 2, |i, j| if j == 0 { i as f64 } else { 1.0 });
        let cands = default_candidates(&y, 1, &[]);
        assert!(matches!(
            fit_vlstar(&y, None, &cands, &VlstarOptions::default()),
            Err(Error::ZeroVariance(_))
        ));
        let short = linear_var(30, 1);
        assert!(matches!(
            fit_vlstar(&short, None, &default_candidates(&short, 1, &[]), &VlstarOptions::default()),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn labeling_rule() {
        let (y, _) = simulate(200, 5.0, 0.0, 9);
        let cand = lag1_candidate(&y);
        let mut fit =
            fit_vlstar_fixed(&y, None, 1, &cand, LogisticParams::new(1.0, 0.0).unwrap()).unwrap();
        fit.g_values = vec![0.2, 0.5, 0.8];
        let months: Vec<Month> = (0..3).map(|i| Month::new(2020, 1).unwrap().offset(i)).collect();
        let r = label_regimes(&fit, &[1.0, 1.0, 4.0], &months).unwrap();
        assert_eq!(r.labels, [Regime::Calm, Regime::Calm, Regime::HighVol]);
        fit.g_values = vec![0.1, 0.2, 0.3];
        let r = label_regimes(&fit, &[1.0, 1.0, 4.0], &months).unwrap();
        assert!(r.labels.iter().all(|l| *l == Regime::Calm));
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn fit_is_deterministic() {
        let (y, _) = simulate(200, 5.0, 0.0, 11);
        let cands = default_candidates(&y, 1, &[]);
        let a = fit_vlstar(&y, None, &cands, &VlstarOptions::default()).unwrap();
        let b = fit_vlstar(&y, None, &cands, &VlstarOptions::default()).unwrap();
        assert_eq!(a.g_values, b.g_values);
        assert_eq!(a.ssr, b.ssr);
    }
}
