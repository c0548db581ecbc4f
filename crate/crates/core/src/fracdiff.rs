//! Fractional integration order via log-periodogram regression, and
//! fractional differencing with truncated binomial weights of `(1 - L)^d`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{PricePanel, ReturnPanel};

pub const MIN_ESTIMATION_LENGTH: usize = 32;
pub const DEFAULT_MAX_TRUNCATION: usize = 1000;

/// Per-instrument differencing recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FracDiffSpec {
    pub instrument_id: String,
    pub d: f64,
    /// Number of Fourier ordinates used in the periodogram regression.
    pub bandwidth: usize,
    /// Largest lag of the differencing filter.
    pub truncation: usize,
}

/// Output of the log-periodogram regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodogramEstimate {
    pub d: f64,
    pub intercept: f64,
    pub bandwidth: usize,
}

/// Default bandwidth `floor(sqrt(T))`.
pub fn default_bandwidth(len: usize) -> usize {
    (len as f64).sqrt().floor() as usize
}

/// Periodogram of the demeaned series at the first `m` Fourier frequencies
/// `2 pi j / T`, `j = 1..=m`.
pub fn periodogram(x: &[f64], m: usize) -> Vec<f64> {
    let t = x.len();
    let mean = x.iter().sum::<f64>() / t as f64;
    (1..=m)
        .map(|j| {
            let lambda = 2.0 * PI * j as f64 / t as f64;
            let (mut re, mut im) = (0.0, 0.0);
            for (k, v) in x.iter().enumerate() {
                let angle = lambda * k as f64;
                re += (v - mean) * angle.cos();
                im -= (v - mean) * angle.sin();
            }
            (re * re + im * im) / (2.0 * PI * t as f64)
        })
        .collect()
}

/// Estimates `d` with the default bandwidth.
pub fn estimate_d(x: &[f64]) -> Result<PeriodogramEstimate> {
    estimate_d_with_bandwidth(x, default_bandwidth(x.len()))
}

/// Regresses `ln I(lambda_j)` on `-2 ln(2 sin(lambda_j / 2))` over the first
/// `bandwidth` Fourier frequencies; the slope is `d`.
pub fn estimate_d_with_bandwidth(x: &[f64], bandwidth: usize) -> Result<PeriodogramEstimate> {
    if x.len() < MIN_ESTIMATION_LENGTH {
        return Err(Error::TooShort {
            what: "fractional order estimation".into(),
            needed: MIN_ESTIMATION_LENGTH,
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("series contains non-finite values"));
    }
    if bandwidth < 2 || bandwidth > x.len() / 2 {
        return Err(Error::invalid(format!(
            "bandwidth {bandwidth} outside 2..={}",
            x.len() / 2
        )));
    }
    let first = x[0];
    if x.iter().all(|v| *v == first) {
        return Err(Error::ZeroVariance("series is constant".into()));
    }
    let t = x.len() as f64;
    let pg = periodogram(x, bandwidth);
    let mut regressor = Vec::with_capacity(bandwidth);
    let mut response = Vec::with_capacity(bandwidth);
    for (j, i) in pg.iter().enumerate() {
        let lambda = 2.0 * PI * (j + 1) as f64 / t;
        regressor.push(-2.0 * (2.0 * (lambda / 2.0).sin()).ln());
        response.push(i.max(f64::MIN_POSITIVE).ln());
    }
    let mx = regressor.iter().sum::<f64>() / bandwidth as f64;
    let my = response.iter().sum::<f64>() / bandwidth as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (a, b) in regressor.iter().zip(&response) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    let d = sxy / sxx;
    Ok(PeriodogramEstimate {
        d,
        intercept: my - d * mx,
        bandwidth,
    })
}

impl FracDiffSpec {
    /// Estimates `d` for one series with the default bandwidth and truncation.
    pub fn estimate(instrument_id: impl Into<String>, x: &[f64]) -> Result<Self> {
        let est = estimate_d(x)?;
        Ok(FracDiffSpec {
            instrument_id: instrument_id.into(),
            d: est.d,
            bandwidth: est.bandwidth,
            truncation: default_truncation(x.len()),
        })
    }
}

pub fn default_truncation(len: usize) -> usize {
    DEFAULT_MAX_TRUNCATION.min(len)
}

/// `w_0 = 1`, `w_k = w_{k-1} (k - 1 - d) / k` for `k = 1..=max_lag`.
pub fn weights(d: f64, max_lag: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(max_lag + 1);
    w.push(1.0);
    for k in 1..=max_lag {
        let prev = w[k - 1];
        w.push(prev * (k as f64 - 1.0 - d) / k as f64);
    }
    w
}

/// `y_t = sum_{k=0}^{min(t, truncation)} w_k x_{t-k}`. Early observations use
/// whatever history exists, so the output has the input's length.
pub fn frac_difference(x: &[f64], d: f64, truncation: usize) -> Result<Vec<f64>> {
    if !d.is_finite() {
        return Err(Error::invalid(format!("fractional order {d} is not finite")));
    }
    if truncation < 1 || truncation > x.len() {
        return Err(Error::invalid(format!(
            "truncation {truncation} outside 1..={}",
            x.len()
        )));
    }
    let w = weights(d, truncation);
    Ok((0..x.len())
        .map(|t| {
            (0..=t.min(truncation))
                .map(|k| w[k] * x[t - k])
                .sum::<f64>()
        })
        .collect())
}

/// What the differencing filter is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DifferencingTarget {
    /// Log price levels; `d` near 1 reproduces ordinary returns.
    #[default]
    LogPrices,
    /// Log returns; the total integration order is `1 + d`.
    Returns,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FracDiffOptions {
    pub target: DifferencingTarget,
    /// Overrides `floor(sqrt(T))`.
    pub bandwidth: Option<usize>,
    /// Overrides `min(1000, T)`.
    pub truncation: Option<usize>,
}

impl Default for FracDiffOptions {
    fn default() -> Self {
        FracDiffOptions {
            target: DifferencingTarget::LogPrices,
            bandwidth: None,
            truncation: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentReport {
    #[serde(flatten)]
    pub spec: FracDiffSpec,
    /// Order of integration relative to log prices (compare with 1).
    pub integration_order: f64,
    /// Rows whose filter had fewer than `truncation` lags of history.
    pub partial_window_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FracDiffReport {
    pub target: DifferencingTarget,
    pub instruments: Vec<InstrumentReport>,
}

/// Estimates `d` per instrument and differences the panel. The output rows
/// line up with `prices.returns()`: in level mode the first row (a bare
/// level with no history) is dropped.
pub fn difference_panel(
    prices: &PricePanel,
    opts: &FracDiffOptions,
) -> Result<(ReturnPanel, FracDiffReport)> {
    let returns = prices.returns()?;
    let source: DMatrix<f64> = match opts.target {
        DifferencingTarget::LogPrices => prices.log_prices.clone(),
        DifferencingTarget::Returns => returns.returns().clone(),
    };
    let skip = match opts.target {
        DifferencingTarget::LogPrices => 1,
        DifferencingTarget::Returns => 0,
    };
    let len = source.nrows();
    let mut out = DMatrix::zeros(returns.n_rows(), source.ncols());
    let mut reports = Vec::with_capacity(source.ncols());
    for (j, id) in prices.instruments.iter().enumerate() {
        let column: Vec<f64> = source.column(j).iter().copied().collect();
        let bandwidth = opts.bandwidth.unwrap_or_else(|| default_bandwidth(len));
        let est = estimate_d_with_bandwidth(&column, bandwidth)?;
        let truncation = opts.truncation.unwrap_or_else(|| default_truncation(len));
        let y = frac_difference(&column, est.d, truncation)?;
        for (i, v) in y[skip..].iter().enumerate() {
            out[(i, j)] = *v;
        }
        let integration_order = match opts.target {
            DifferencingTarget::LogPrices => est.d,
            DifferencingTarget::Returns => 1.0 + est.d,
        };
        reports.push(InstrumentReport {
            spec: FracDiffSpec {
                instrument_id: id.clone(),
                d: est.d,
                bandwidth,
                truncation,
            },
            integration_order,
            partial_window_rows: truncation.min(len).saturating_sub(skip),
        });
    }
    Ok((
        returns.with_values(out)?,
        FracDiffReport {
            target: opts.target,
            instruments: reports,
        },
    ))
}
