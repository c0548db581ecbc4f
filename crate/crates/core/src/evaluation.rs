//! Monte-Carlo comparison of the detectors on synthetic data with known
//! regimes, and the truth-filtered backtest on the same datasets.

use serde::{Deserialize, Serialize};

use crate::backtest::{apply_regime_filter, momentum_signal, run_backtest, CostParams, StrategyResult};
use crate::detect::{detect_all, DetectOptions};
use crate::error::Result;
use crate::linalg;
use crate::realized_cov::{realized_covariance, RcovOptions};
use crate::regime::{Detector, RegimeSeries};
use crate::seeds::{split_seed, stage_seed};
use crate::synthetic::{generate, score_rows, ConfusionMatrix, SyntheticDataset, SyntheticParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationConfig {
    pub rows: usize,
    pub assets: usize,
    pub runs: usize,
    pub synthetic: SyntheticParams,
    pub detect: DetectOptions,
    pub costs: CostParams,
    /// Asset traded in the truth-filtered backtest.
    pub backtest_asset: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            rows: 2000,
            assets: 5,
            runs: 100,
            synthetic: SyntheticParams::default(),
            detect: DetectOptions::default(),
            costs: CostParams::default(),
            backtest_asset: 0,
        }
    }
}

/// Dataset seed of run `run` under master seed `master`.
pub fn run_seed(master: u64, run: usize) -> u64 {
    split_seed(stage_seed(master, "synthetic"), run as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub trades: usize,
    pub total_costs_bp: f64,
    pub sharpe_annualized: f64,
    pub final_equity: f64,
}

impl From<&StrategyResult> for StrategySummary {
    fn from(r: &StrategyResult) -> Self {
        StrategySummary {
            trades: r.trade_count(),
            total_costs_bp: r.total_costs_bp,
            sharpe_annualized: r.sharpe_annualized,
            final_equity: r.final_equity(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterComparison {
    pub unfiltered: StrategySummary,
    pub filtered: StrategySummary,
}

/// Momentum strategy on one synthetic asset, unfiltered and filtered by the
/// monthly truth. Each synthetic row is one trading period; volatility is
/// the absolute period return.
pub fn truth_filter_backtest(
    data: &SyntheticDataset,
    asset: usize,
    costs: &CostParams,
) -> Result<(StrategyResult, StrategyResult)> {
    regime_filter_backtest(data, asset, &data.monthly_truth(), costs)
}

/// Same as [`truth_filter_backtest`] with an arbitrary monthly labelling.
pub fn regime_filter_backtest(
    data: &SyntheticDataset,
    asset: usize,
    regimes: &RegimeSeries,
    costs: &CostParams,
) -> Result<(StrategyResult, StrategyResult)> {
    let series = data.prices(asset, 100.0)?;
    let signal = momentum_signal(series.prices())?;
    let filtered = apply_regime_filter(series.timestamps(), &signal, regimes)?;
    let a = run_backtest(series.timestamps(), series.prices(), &signal, None, costs)?;
    let b = run_backtest(series.timestamps(), series.prices(), &filtered, None, costs)?;
    Ok((a, b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEvaluation {
    pub run: usize,
    pub seed: u64,
    pub months: usize,
    pub truth_high_vol_share: f64,
    pub vlstar: ConfusionMatrix,
    pub agnes: ConfusionMatrix,
    pub tvar: ConfusionMatrix,
    pub backtest: FilterComparison,
    pub warnings: Vec<String>,
}

impl RunEvaluation {
    pub fn confusion(&self, detector: Detector) -> Option<&ConfusionMatrix> {
        match detector {
            Detector::Vlstar => Some(&self.vlstar),
            Detector::Agnes => Some(&self.agnes),
            Detector::Tvar => Some(&self.tvar),
            Detector::Truth => None,
        }
    }
}

/// Generates run `run`, detects regimes with all three methods and scores
/// each against the row-level truth.
pub fn evaluate_run(cfg: &EvaluationConfig, master: u64, run: usize) -> Result<RunEvaluation> {
    let seed = run_seed(master, run);
    let data = generate(cfg.rows, cfg.assets, &cfg.synthetic, seed)?;
    let (rcov, mut warnings) = realized_covariance(&data.to_return_panel()?, RcovOptions::default())?;
    let det = detect_all(&rcov, &cfg.detect, stage_seed(seed, "hopkins"))?;
    let row_months = data.row_months();
    let truth = data.row_truth();
    for series in [&det.vlstar.regimes, &det.agnes.regimes, &det.tvar.regimes] {
        warnings.extend(series.warnings.iter().map(|w| format!("{}: {w}", series.detector)));
    }
    let (plain, filtered) = truth_filter_backtest(&data, cfg.backtest_asset, &cfg.costs)?;
    Ok(RunEvaluation {
        run,
        seed,
        months: rcov.len(),
        truth_high_vol_share: truth.iter().filter(|h| **h).count() as f64 / truth.len() as f64,
        vlstar: score_rows(&det.vlstar.regimes, &row_months, truth)?,
        agnes: score_rows(&det.agnes.regimes, &row_months, truth)?,
        tvar: score_rows(&det.tvar.regimes, &row_months, truth)?,
        backtest: FilterComparison {
            unfiltered: (&plain).into(),
            filtered: (&filtered).into(),
        },
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeagueRow {
    pub detector: Detector,
    pub runs: usize,
    pub median_accuracy: f64,
    pub mean_accuracy: f64,
    pub median_highvol_as_calm: f64,
    /// Mean of each confusion cell, `[realized][predicted]`.
    pub mean_cells: [[f64; 2]; 2],
}

/// Per-detector summary across runs, best median accuracy first. Ties keep
/// the order VLSTAR, AGNES, TVAR.
pub fn league_table(runs: &[RunEvaluation]) -> Vec<LeagueRow> {
    let mut rows: Vec<LeagueRow> = [Detector::Vlstar, Detector::Agnes, Detector::Tvar]
        .into_iter()
        .map(|d| {
            let ms: Vec<&ConfusionMatrix> = runs.iter().filter_map(|r| r.confusion(d)).collect();
            league_row(d, &ms)
        })
        .collect();
    rows.sort_by(|a, b| b.median_accuracy.total_cmp(&a.median_accuracy));
    rows
}

pub fn league_row(detector: Detector, matrices: &[&ConfusionMatrix]) -> LeagueRow {
    let acc: Vec<f64> = matrices.iter().map(|m| m.accuracy).collect();
    let hc: Vec<f64> = matrices.iter().map(|m| m.highvol_as_calm).collect();
    let n = matrices.len().max(1) as f64;
    let mut mean_cells = [[0.0; 2]; 2];
    for m in matrices {
        for i in 0..2 {
            for j in 0..2 {
                mean_cells[i][j] += m.cells[i][j] / n;
            }
        }
    }
    let med = |v: &[f64]| if v.is_empty() { f64::NAN } else { linalg::median(v) };
    LeagueRow {
        detector,
        runs: matrices.len(),
        median_accuracy: med(&acc),
        mean_accuracy: acc.iter().sum::<f64>() / n,
        median_highvol_as_calm: med(&hc),
        mean_cells,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub master_seed: u64,
    pub runs: Vec<RunEvaluation>,
    pub league: Vec<LeagueRow>,
}

pub fn evaluate(cfg: &EvaluationConfig, master: u64) -> Result<Evaluation> {
    let runs = (0..cfg.runs)
        .map(|r| evaluate_run(cfg, master, r))
        .collect::<Result<Vec<_>>>()?;
    let league = league_table(&runs);
    Ok(Evaluation {
        master_seed: master,
        runs,
        league,
    })
}
