//! Long/flat moving-average crossover with an optional regime filter and
//! volatility-dependent transaction costs.

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::PriceSeries;
use crate::month::Month;
use crate::regime::{Regime, RegimeSeries};

pub const TRADING_DAYS: f64 = 252.0;
pub const SHORT_WINDOW: usize = 30;
pub const LONG_WINDOW: usize = 100;

/// `MA_short > MA_long` (strict), flat until the long window is full.
pub fn crossover_signal(prices: &[f64], short: usize, long: usize) -> Result<Vec<bool>> {
    if short == 0 || short > long {
        return Err(Error::invalid(format!("windows must satisfy 0 < {short} <= {long}")));
    }
    if prices.len() < long {
        return Err(Error::TooShort {
            what: "moving-average signal".into(),
            needed: long,
            got: prices.len(),
        });
    }
    let mut prefix = Vec::with_capacity(prices.len() + 1);
    prefix.push(0.0);
    for p in prices {
        prefix.push(prefix.last().unwrap() + p);
    }
    let ma = |t: usize, w: usize| (prefix[t + 1] - prefix[t + 1 - w]) / w as f64;
    Ok((0..prices.len())
        .map(|t| t + 1 >= long && ma(t, short) > ma(t, long))
        .collect())
}

/// 30-day versus 100-day crossover.
pub fn momentum_signal(prices: &[f64]) -> Result<Vec<bool>> {
    crossover_signal(prices, SHORT_WINDOW, LONG_WINDOW)
}

/// Keeps the signal only in months labelled Calm.
pub fn apply_regime_filter(
    timestamps: &[DateTime<Utc>],
    signal: &[bool],
    regimes: &RegimeSeries,
) -> Result<Vec<bool>> {
    if timestamps.len() != signal.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} timestamps vs {} signal values",
            timestamps.len(),
            signal.len()
        )));
    }
    timestamps
        .iter()
        .zip(signal)
        .map(|(ts, s)| {
            let month = Month::of(ts);
            match regimes.get(month) {
                Some(r) => Ok(*s && r == Regime::Calm),
                None => Err(Error::UncoveredDate(format!("{ts} (month {month})"))),
            }
        })
        .collect()
}

/// Index range of the timestamps whose months lie between the first and
/// last labelled month. Gaps inside the range are left to
/// [`apply_regime_filter`] to report.
pub fn covered_span(timestamps: &[DateTime<Utc>], regimes: &RegimeSeries) -> Result<std::ops::Range<usize>> {
    let (Some(first), Some(last)) = (regimes.months.first(), regimes.months.last()) else {
        return Err(Error::invalid("regime series is empty"));
    };
    let start = timestamps.iter().position(|ts| Month::of(ts) >= *first);
    let end = timestamps.iter().rposition(|ts| Month::of(ts) <= *last);
    match (start, end) {
        (Some(s), Some(e)) if s <= e => Ok(s..e + 1),
        _ => Err(Error::UncoveredDate(format!("no timestamp falls in {first}..={last}"))),
    }
}

/// Number of maximal runs of HighVol months.
pub fn high_vol_spells(regimes: &RegimeSeries) -> usize {
    let mut prev = false;
    let mut spells = 0;
    for r in &regimes.labels {
        let h = r.is_high_vol();
        if h && !prev {
            spells += 1;
        }
        prev = h;
    }
    spells
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolatilityScaling {
    /// `sigma_t / mean(sigma)`.
    #[default]
    Mean,
    /// `sigma_t` as is.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostParams {
    pub lambda0_bp: f64,
    pub lambda1_inv_bp: f64,
    pub scaling: VolatilityScaling,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            lambda0_bp: 1.0,
            lambda1_inv_bp: 0.5,
            scaling: VolatilityScaling::Mean,
        }
    }
}

impl CostParams {
    pub fn zero() -> Self {
        CostParams {
            lambda0_bp: 0.0,
            lambda1_inv_bp: 0.0,
            scaling: VolatilityScaling::Mean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Buy,
    Sell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trade {
    pub index: usize,
    pub timestamp: DateTime<Utc>,
    pub direction: Direction,
    pub cost_bp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyResult {
    pub timestamps: Vec<DateTime<Utc>>,
    /// `true` = long.
    pub positions: Vec<bool>,
    pub strategy_returns: Vec<f64>,
    pub equity_curve: Vec<f64>,
    pub trades: Vec<Trade>,
    pub sharpe_annualized: f64,
    pub total_costs_bp: f64,
}

impl StrategyResult {
    pub fn trade_count(&self) -> usize {
        self.trades.len()
    }

    pub fn final_equity(&self) -> f64 {
        self.equity_curve.last().copied().unwrap_or(1.0)
    }
}

/// Mean over standard deviation of per-period returns times `sqrt(252)`;
/// zero when the returns have no dispersion.
pub fn sharpe_ratio(returns: &[f64]) -> f64 {
    if returns.len() < 2 {
        return 0.0;
    }
    let mean = crate::linalg::mean(returns);
    let sd = crate::linalg::sample_sd(returns);
    if !(sd > 0.0) {
        return 0.0;
    }
    mean / sd * TRADING_DAYS.sqrt()
}

/// Runs the strategy. The position decided at `t` earns the return from
/// `t` to `t + 1`; a change of position at `t` costs
/// `(lambda0 + lambda1_inv * sigma_t [/ mean sigma])` basis points.
/// `volatility` defaults to the absolute simple return of each period.
pub fn run_backtest(
    timestamps: &[DateTime<Utc>],
    prices: &[f64],
    positions: &[bool],
    volatility: Option<&[f64]>,
    costs: &CostParams,
) -> Result<StrategyResult> {
    let t = prices.len();
    if timestamps.len() != t || positions.len() != t || volatility.is_some_and(|v| v.len() != t) {
        return Err(Error::DimensionMismatch(format!(
            "backtest inputs must align: {} timestamps, {t} prices, {} positions",
            timestamps.len(),
            positions.len()
        )));
    }
    if t == 0 {
        return Err(Error::invalid("empty price series"));
    }
    if prices.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
        return Err(Error::invalid("prices must be positive and finite"));
    }
    let asset: Vec<f64> = (0..t)
        .map(|i| if i == 0 { 0.0 } else { prices[i] / prices[i - 1] - 1.0 })
        .collect();
    let sigma: Vec<f64> = match volatility {
        Some(v) => v.to_vec(),
        None => asset.iter().map(|r| r.abs()).collect(),
    };
    if sigma.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::invalid("volatility must be non-negative"));
    }
    let sigma_bar = sigma.iter().sum::<f64>() / t as f64;
    let scaled = |s: f64| match costs.scaling {
        VolatilityScaling::Raw => s,
        VolatilityScaling::Mean if sigma_bar > 0.0 => s / sigma_bar,
        VolatilityScaling::Mean => 0.0,
    };

    let mut strategy_returns = Vec::with_capacity(t);
    let mut equity_curve = Vec::with_capacity(t);
    let mut trades = Vec::new();
    let mut total_costs_bp = 0.0;
    let mut equity = 1.0;
    let mut prev = false;
    for i in 0..t {
        let held = if i == 0 { false } else { positions[i - 1] };
        let mut r = if held { asset[i] } else { 0.0 };
        if positions[i] != prev {
            let cost_bp = costs.lambda0_bp + costs.lambda1_inv_bp * scaled(sigma[i]);
            r -= cost_bp * 1e-4;
            total_costs_bp += cost_bp;
            trades.push(Trade {
                index: i,
                timestamp: timestamps[i],
                direction: if positions[i] { Direction::Buy } else { Direction::Sell },
                cost_bp,
            });
        }
        prev = positions[i];
        equity *= 1.0 + r;
        strategy_returns.push(r);
        equity_curve.push(equity);
    }
    Ok(StrategyResult {
        timestamps: timestamps.to_vec(),
        positions: positions.to_vec(),
        sharpe_annualized: sharpe_ratio(&strategy_returns),
        strategy_returns,
        equity_curve,
        trades,
        total_costs_bp,
    })
}

/// Daily closes and intraday volatility derived from an intraday series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyBars {
    pub dates: Vec<NaiveDate>,
    /// Timestamp of the last observation of each day.
    pub timestamps: Vec<DateTime<Utc>>,
    pub closes: Vec<f64>,
    /// Sample standard deviation of the day's intraday log returns, or the
    /// absolute daily log return when the day has fewer than two.
    pub volatility: Vec<f64>,
}

impl DailyBars {
    pub fn from_series(series: &PriceSeries) -> Self {
        let mut bars = DailyBars {
            dates: Vec::new(),
            timestamps: Vec::new(),
            closes: Vec::new(),
            volatility: Vec::new(),
        };
        let mut intraday: Vec<f64> = Vec::new();
        let ts = series.timestamps();
        let px = series.prices();
        let flush = |bars: &mut DailyBars, intraday: &mut Vec<f64>| {
            let n = bars.closes.len();
            let vol = if intraday.len() >= 2 {
                crate::linalg::sample_sd(intraday)
            } else if n >= 2 {
                (bars.closes[n - 1] / bars.closes[n - 2]).ln().abs()
            } else {
                0.0
            };
            bars.volatility.push(vol);
            intraday.clear();
        };
        for i in 0..ts.len() {
            let date = ts[i].date_naive();
            if bars.dates.last() != Some(&date) {
                if !bars.dates.is_empty() {
                    flush(&mut bars, &mut intraday);
                }
                bars.dates.push(date);
                bars.timestamps.push(ts[i]);
                bars.closes.push(px[i]);
            } else {
                intraday.push((px[i] / px[i - 1]).ln());
                *bars.timestamps.last_mut().unwrap() = ts[i];
                *bars.closes.last_mut().unwrap() = px[i];
            }
        }
        if !bars.dates.is_empty() {
            flush(&mut bars, &mut intraday);
        }
        bars
    }
}
