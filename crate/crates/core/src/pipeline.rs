//! Configuration, stage functions and the end-to-end run.
//!
//! Every stage reads its inputs from files and writes its outputs to files,
//! so running stages one at a time from persisted intermediates gives the
//! same bytes as a full run. Per-stage seeds come from the master seed via
//! [`stage_seed`].

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backtest::{
    apply_regime_filter, covered_span, momentum_signal, run_backtest, CostParams, DailyBars, Direction,
    StrategyResult, VolatilityScaling,
};
use crate::cluster::DistanceMetric;
use crate::detect::{self, ScorePanel};
use crate::error::{Error, Result};
use crate::evaluation::{self, league_row, EvaluationConfig, LeagueRow, StrategySummary};
use crate::fracdiff::{difference_panel, FracDiffOptions};
use crate::io;
use crate::market_data::{align_prices, load_prices, CsvFormat, PricePanel, PriceSeries};
use crate::month::Month;
use crate::realized_cov::{realized_covariance, RcovOptions};
use crate::regime::{Detector, RegimeSeries};
use crate::seeds::stage_seed;
use crate::synthetic::{generate, score_rows, ConfusionMatrix, SyntheticParams};
use crate::tvar::TvarOptions;
use crate::vlstar::{TransitionVariable, VlstarFit, VlstarOptions};

/// File names of the persisted intermediates, relative to the output
/// directory.
pub mod files {
    pub const PRICES: &str = "prices.csv";
    pub const RETURNS: &str = "returns.csv";
    pub const TRUTH: &str = "truth.csv";
    pub const TRUTH_REGIMES: &str = "regimes_truth.csv";
    pub const FRACDIFF: &str = "fracdiff.csv";
    pub const FRACDIFF_REPORT: &str = "fracdiff_report.json";
    pub const RCOV: &str = "rcov.csv";
    pub const RCOV_MATRICES: &str = "rcov_matrices.json";
    pub const SCORES_COVARIANCE: &str = "scores_covariance.csv";
    pub const SCORES_METRIC: &str = "scores_metric.csv";
    pub const PCA_COVARIANCE: &str = "pca_covariance.json";
    pub const PCA_METRIC: &str = "pca_metric.json";
    pub const VLSTAR_FIT: &str = "vlstar_fit.json";
    pub const TVAR_FIT: &str = "tvar_fit.json";
    pub const DENDROGRAM: &str = "agnes_dendrogram.json";
    pub const VALIDATION: &str = "agnes_validation.json";
    pub const ORDERED_DISSIMILARITY: &str = "agnes_ordered_dissimilarity.csv";
    pub const CONFUSION: &str = "confusion.json";
    pub const LEAGUE: &str = "league.csv";
    pub const EVALUATION: &str = "evaluation.json";
    pub const EQUITY: &str = "equity.csv";
    pub const TRADES: &str = "trades.csv";
    pub const BACKTEST_SUMMARY: &str = "backtest_summary.json";
    pub const MANIFEST: &str = "manifest.json";

    pub fn regimes(detector: super::Detector) -> String {
        format!("regimes_{}.csv", detector.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSource {
    /// Price files listed under `[input]`.
    #[default]
    Files,
    /// One synthetic dataset drawn from `[synthetic]`.
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub source: InputSource,
    pub prices: Vec<PathBuf>,
    /// Instrument ids, one per price file; defaults to the file stems.
    pub ids: Vec<String>,
    pub timestamp_column: String,
    pub price_column: String,
}

impl Default for InputConfig {
    fn default() -> Self {
        InputConfig {
            source: InputSource::Files,
            prices: Vec::new(),
            ids: Vec::new(),
            timestamp_column: "timestamp".into(),
            price_column: "price".into(),
        }
    }
}

impl InputConfig {
    pub fn formats(&self) -> Result<Vec<CsvFormat>> {
        if !self.ids.is_empty() && self.ids.len() != self.prices.len() {
            return Err(Error::Config(format!(
                "{} ids for {} price files",
                self.ids.len(),
                self.prices.len()
            )));
        }
        Ok(self
            .prices
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let id = self.ids.get(i).cloned().unwrap_or_else(|| {
                    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| format!("asset{}", i + 1))
                });
                CsvFormat {
                    instrument_id: id,
                    timestamp_column: self.timestamp_column.clone(),
                    price_column: self.price_column.clone(),
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stages {
    /// Loads the price files, or simulates when the input is synthetic.
    pub ingest: bool,
    pub fracdiff: bool,
    pub rcov: bool,
    pub pca: bool,
    pub detect_vlstar: bool,
    pub detect_agnes: bool,
    pub detect_tvar: bool,
    pub evaluate: bool,
    pub backtest: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Stages {
            ingest: true,
            fracdiff: false,
            rcov: true,
            pca: true,
            detect_vlstar: true,
            detect_agnes: true,
            detect_tvar: true,
            evaluate: false,
            backtest: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcaConfig {
    pub components: usize,
}

impl Default for PcaConfig {
    fn default() -> Self {
        PcaConfig { components: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgnesConfig {
    pub metric: DistanceMetric,
    pub hopkins_sample: Option<usize>,
}

/// Dataset shape for the synthetic source and the Monte-Carlo evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub rows: usize,
    pub assets: usize,
    pub runs: usize,
    pub backtest_asset: usize,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            rows: 2000,
            assets: 5,
            runs: 100,
            backtest_asset: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestConfig {
    /// Detector whose labels filter the strategy.
    pub detector: Detector,
    /// Price column to trade; defaults to the first instrument.
    pub instrument: Option<String>,
    pub lambda0_bp: f64,
    pub lambda1_inv_bp: f64,
    pub scaling: VolatilityScaling,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        let c = CostParams::default();
        BacktestConfig {
            detector: Detector::Vlstar,
            instrument: None,
            lambda0_bp: c.lambda0_bp,
            lambda1_inv_bp: c.lambda1_inv_bp,
            scaling: c.scaling,
        }
    }
}

impl BacktestConfig {
    pub fn costs(&self) -> CostParams {
        CostParams {
            lambda0_bp: self.lambda0_bp,
            lambda1_inv_bp: self.lambda1_inv_bp,
            scaling: self.scaling,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    /// Not part of the config hash.
    pub out: Option<PathBuf>,
    pub stages: Stages,
    pub input: InputConfig,
    pub fracdiff: FracDiffOptions,
    pub rcov: RcovOptions,
    pub pca: PcaConfig,
    pub vlstar: VlstarOptions,
    pub tvar: TvarOptions,
    pub agnes: AgnesConfig,
    pub synthetic: SyntheticParams,
    pub evaluate: EvaluateConfig,
    pub backtest: BacktestConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    /// SHA-256 of the canonical JSON form with the output directory removed.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        sha256_hex(serde_json::to_string(&c).expect("config serialises").as_bytes())
    }

    pub fn require_seed(&self, stage: &str) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config(format!("stage `{stage}` is stochastic and needs a seed")))
    }

    pub fn evaluation_config(&self) -> EvaluationConfig {
        EvaluationConfig {
            rows: self.evaluate.rows,
            assets: self.evaluate.assets,
            runs: self.evaluate.runs,
            synthetic: self.synthetic.clone(),
            detect: detect::DetectOptions {
                pca_components: self.pca.components,
                vlstar: self.vlstar.clone(),
                tvar: self.tvar.clone(),
                metric: self.agnes.metric,
                hopkins_sample: self.agnes.hopkins_sample,
            },
            costs: self.backtest.costs(),
            backtest_asset: self.evaluate.backtest_asset,
        }
    }

    /// Checks everything that can be checked before a stage runs: input
    /// files, intermediates needed by enabled stages whose producers are
    /// disabled, seeds and parameter ranges.
    pub fn validate(&self) -> Result<()> {
        let s = &self.stages;
        let out = self.out_dir();
        let synthetic = self.input.source == InputSource::Synthetic;
        if s.ingest {
            if synthetic {
                self.require_seed("ingest (synthetic)")?;
                self.synthetic.validate()?;
            } else {
                if self.input.prices.len() < 2 {
                    return Err(Error::Config("[input] prices must list at least two files".into()));
                }
                for p in &self.input.prices {
                    if !p.exists() {
                        return Err(Error::MissingFile(p.clone()));
                    }
                }
                self.input.formats()?;
            }
        }
        if s.fracdiff && synthetic {
            return Err(Error::Config("fracdiff needs price files; disable it for synthetic input".into()));
        }
        if s.detect_agnes {
            self.require_seed("detect_agnes")?;
        }
        if s.evaluate {
            self.require_seed("evaluate")?;
            self.synthetic.validate()?;
        }
        if self.pca.components == 0 {
            return Err(Error::Config("[pca] components must be positive".into()));
        }
        let need = |enabled: bool, producer: bool, file: &str| -> Result<()> {
            if enabled && !producer && !out.join(file).exists() {
                return Err(Error::Config(format!(
                    "{} is required but neither present nor produced by an enabled stage",
                    out.join(file).display()
                )));
            }
            Ok(())
        };
        let returns_file = if s.fracdiff || (!s.ingest && out.join(files::FRACDIFF).exists() && !synthetic) {
            files::FRACDIFF
        } else {
            files::RETURNS
        };
        need(s.fracdiff, s.ingest, files::PRICES)?;
        need(s.rcov, s.ingest || s.fracdiff, returns_file)?;
        need(s.pca, s.rcov, files::RCOV)?;
        need(s.detect_vlstar || s.detect_tvar, s.pca, files::SCORES_COVARIANCE)?;
        need(s.detect_agnes, s.pca, files::SCORES_METRIC)?;
        if s.backtest {
            need(true, s.ingest, files::PRICES)?;
            let producer = match self.backtest.detector {
                Detector::Vlstar => s.detect_vlstar,
                Detector::Agnes => s.detect_agnes,
                Detector::Tvar => s.detect_tvar,
                Detector::Truth => synthetic && s.ingest,
            };
            need(true, producer, &files::regimes(self.backtest.detector))?;
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub ok: bool,
    pub artifacts: Vec<ArtifactRecord>,
    pub warnings: Vec<String>,
    pub error: Option<String>,
}

/// Run record. Contains no wall-clock times, so identical runs produce
/// identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub package_version: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub ok: bool,
    pub stages: Vec<StageRecord>,
}

/// Files and warnings produced by one stage.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageOutput {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

impl StageOutput {
    fn push(&mut self, path: PathBuf) {
        self.files.push(path);
    }
}

/// Manifest entry for a stage result, hashing every file it wrote.
pub fn stage_record(out: &Path, stage: &str, result: &Result<StageOutput>) -> Result<StageRecord> {
    match result {
        Ok(o) => {
            let mut artifacts = Vec::new();
            for f in &o.files {
                let bytes = fs::read(f).map_err(|e| Error::io(f, e))?;
                artifacts.push(ArtifactRecord {
                    path: f
                        .strip_prefix(out)
                        .unwrap_or(f)
                        .to_string_lossy()
                        .replace('\\', "/"),
                    sha256: sha256_hex(&bytes),
                    bytes: bytes.len() as u64,
                });
            }
            Ok(StageRecord {
                stage: stage.to_string(),
                ok: true,
                artifacts,
                warnings: o.warnings.clone(),
                error: None,
            })
        }
        Err(e) => Ok(StageRecord {
            stage: stage.to_string(),
            ok: false,
            artifacts: Vec::new(),
            warnings: Vec::new(),
            error: Some(e.to_string()),
        }),
    }
}

// ---------------------------------------------------------------- stages

/// Loads, aligns and writes the price and log-return panels.
pub fn stage_ingest(paths: &[PathBuf], formats: &[CsvFormat], out: &Path) -> Result<StageOutput> {
    let series = paths
        .iter()
        .zip(formats)
        .map(|(p, f)| load_prices(p, f))
        .collect::<Result<Vec<_>>>()?;
    let prices = align_prices(&series)?;
    let mut o = StageOutput::default();
    for s in &series {
        if s.len() != prices.timestamps.len() {
            o.warnings.push(format!(
                "{}: {} of {} timestamps kept after alignment",
                s.instrument_id(),
                prices.timestamps.len(),
                s.len()
            ));
        }
    }
    write_prices_and_returns(&prices, out, &mut o)?;
    Ok(o)
}

fn write_prices_and_returns(prices: &PricePanel, out: &Path, o: &mut StageOutput) -> Result<()> {
    io::write_price_panel(out.join(files::PRICES), prices)?;
    o.push(out.join(files::PRICES));
    io::write_return_panel(out.join(files::RETURNS), &prices.returns()?)?;
    o.push(out.join(files::RETURNS));
    Ok(())
}

/// One synthetic dataset: price and return panels (prices start at 100),
/// row-level truth and monthly truth labels.
pub fn stage_simulate(rows: usize, assets: usize, params: &SyntheticParams, seed: u64, out: &Path) -> Result<StageOutput> {
    let data = generate(rows, assets, params, seed)?;
    let ts = data.timestamps();
    let m = ts.len();
    // one leading row at the start level so that returns line up with rows
    let mut stamps = vec![ts[0] - chrono::Duration::days(1)];
    stamps.extend(ts.iter().copied());
    let log_prices = DMatrix::from_fn(m + 1, assets, |i, j| {
        100f64.ln() + (0..i).map(|r| data.returns[(r, j)]).sum::<f64>()
    });
    let prices = PricePanel {
        timestamps: stamps,
        instruments: data.instruments(),
        log_prices,
    };
    let mut o = StageOutput::default();
    io::write_price_panel(out.join(files::PRICES), &prices)?;
    o.push(out.join(files::PRICES));
    // the generated returns themselves, not re-differenced prices
    let panel = data.to_return_panel()?;
    io::write_return_panel(out.join(files::RETURNS), &panel)?;
    o.push(out.join(files::RETURNS));
    let truth = io::RowTruth {
        timestamps: ts,
        months: data.row_months(),
        b_bar: data.b_bar[..m].to_vec(),
        high_vol: data.row_truth().to_vec(),
    };
    io::write_truth(out.join(files::TRUTH), &truth)?;
    o.push(out.join(files::TRUTH));
    let regimes = data.monthly_truth();
    io::write_regimes(out.join(files::TRUTH_REGIMES), &regimes)?;
    o.push(out.join(files::TRUTH_REGIMES));
    if data.n_rows() > m {
        o.warnings.push(format!("{} trailing rows outside a complete month dropped", data.n_rows() - m));
    }
    Ok(o)
}

pub fn stage_fracdiff(prices: &Path, opts: &FracDiffOptions, out: &Path) -> Result<StageOutput> {
    let panel = io::read_price_panel(prices)?;
    let (diffed, report) = difference_panel(&panel, opts)?;
    let mut o = StageOutput::default();
    io::write_return_panel(out.join(files::FRACDIFF), &diffed)?;
    o.push(out.join(files::FRACDIFF));
    io::write_json(out.join(files::FRACDIFF_REPORT), &report)?;
    o.push(out.join(files::FRACDIFF_REPORT));
    Ok(o)
}

#[derive(Serialize)]
struct MonthMatrix {
    month: Month,
    rows: usize,
    min_eigenvalue: f64,
    matrix: Vec<Vec<f64>>,
}

pub fn stage_rcov(returns: &Path, opts: RcovOptions, dump_matrices: bool, out: &Path) -> Result<StageOutput> {
    let panel = io::read_return_panel(returns)?;
    let (rcov, warnings) = realized_covariance(&panel, opts)?;
    let mut o = StageOutput {
        warnings,
        ..StageOutput::default()
    };
    io::write_rcov(out.join(files::RCOV), &rcov)?;
    o.push(out.join(files::RCOV));
    if dump_matrices {
        let dump: Vec<MonthMatrix> = (0..rcov.len())
            .map(|t| MonthMatrix {
                month: rcov.months[t],
                rows: rcov.observations[t],
                min_eigenvalue: rcov.min_eigenvalues[t],
                matrix: rcov.matrices[t].row_iter().map(|r| r.iter().copied().collect()).collect(),
            })
            .collect();
        io::write_json(out.join(files::RCOV_MATRICES), &serde_json::json!({
            "instruments": rcov.instruments,
            "months": dump,
        }))?;
        o.push(out.join(files::RCOV_MATRICES));
    }
    Ok(o)
}

#[derive(Serialize)]
struct PcaReport<'a> {
    input: &'a str,
    columns: Vec<String>,
    means: &'a [f64],
    scales: &'a [f64],
    /// One entry per component.
    loadings: Vec<Vec<f64>>,
    variances: &'a [f64],
    explained_variance_ratio: &'a [f64],
    cumulative_variance: f64,
}

/// PCA of the raw covariances (VLSTAR and TVAR input) and of the
/// standardised `1 - rho^2` features (AGNES input).
pub fn stage_pca(rcov_path: &Path, k: usize, out: &Path) -> Result<StageOutput> {
    let rcov = io::read_rcov(rcov_path)?;
    let mut o = StageOutput::default();
    let dist = crate::realized_cov::DistanceMatrixSeries::from_covariances(&rcov)?;
    let runs = [
        ("vech covariances", rcov.vech_header(), detect::covariance_pca(&rcov, k)?, files::SCORES_COVARIANCE, files::PCA_COVARIANCE),
        ("standardised 1 - rho^2 metrics", dist.feature_header(), detect::metric_pca(&rcov, k)?, files::SCORES_METRIC, files::PCA_METRIC),
    ];
    for (input, columns, (model, panel), scores_file, report_file) in runs {
        io::write_scores(out.join(scores_file), &panel)?;
        o.push(out.join(scores_file));
        let report = PcaReport {
            input,
            columns,
            means: &model.means,
            scales: &model.scales,
            loadings: model.loadings.column_iter().map(|c| c.iter().copied().collect()).collect(),
            variances: &model.variances,
            explained_variance_ratio: &model.explained_variance_ratio,
            cumulative_variance: model.explained_variance_ratio.iter().sum(),
        };
        io::write_json(out.join(report_file), &report)?;
        o.push(out.join(report_file));
    }
    Ok(o)
}

#[derive(Serialize)]
struct VlstarReport<'a> {
    months: &'a [Month],
    fit: &'a VlstarFit,
}

pub fn stage_detect_vlstar(scores: &Path, opts: &VlstarOptions, out: &Path) -> Result<StageOutput> {
    let panel = io::read_scores(scores)?;
    let det = detect::detect_vlstar(&panel, opts)?;
    let mut o = StageOutput {
        warnings: det.regimes.warnings.clone(),
        ..StageOutput::default()
    };
    io::write_json(out.join(files::VLSTAR_FIT), &VlstarReport {
        months: &det.regimes.months,
        fit: &det.fit,
    })?;
    o.push(out.join(files::VLSTAR_FIT));
    write_regimes(&det.regimes, out, &mut o)?;
    Ok(o)
}

fn write_regimes(regimes: &RegimeSeries, out: &Path, o: &mut StageOutput) -> Result<()> {
    let path = out.join(files::regimes(regimes.detector));
    io::write_regimes(&path, regimes)?;
    o.push(path);
    Ok(())
}

#[derive(Deserialize)]
struct VlstarTransition {
    fit: TransitionFields,
}

#[derive(Deserialize)]
struct TransitionFields {
    transition_variable_id: String,
    transition_values: Vec<f64>,
}

/// TVAR on the VLSTAR transition variable: taken from `vlstar_fit` when
/// given, otherwise re-selected by the linearity test on the same scores.
pub fn stage_detect_tvar(scores: &Path, vlstar_fit: Option<&Path>, opts: &TvarOptions, out: &Path) -> Result<StageOutput> {
    let panel = io::read_scores(scores)?;
    let transition = match vlstar_fit {
        Some(p) => {
            let t: VlstarTransition = io::read_json(p)?;
            Some(TransitionVariable {
                id: t.fit.transition_variable_id,
                values: t.fit.transition_values,
            })
        }
        None => None,
    };
    let det = detect::detect_tvar(&panel, transition.as_ref(), opts)?;
    let mut o = StageOutput {
        warnings: det.regimes.warnings.clone(),
        ..StageOutput::default()
    };
    io::write_json(out.join(files::TVAR_FIT), &serde_json::json!({
        "months": det.regimes.months,
        "fit": det.fit,
    }))?;
    o.push(out.join(files::TVAR_FIT));
    write_regimes(&det.regimes, out, &mut o)?;
    Ok(o)
}

pub fn stage_detect_agnes(
    scores: &Path,
    cfg: &AgnesConfig,
    seed: u64,
    out: &Path,
) -> Result<StageOutput> {
    let panel: ScorePanel = io::read_scores(scores)?;
    let det = detect::detect_agnes(&panel, cfg.metric, cfg.hopkins_sample, seed)?;
    let mut o = StageOutput {
        warnings: det.regimes.warnings.clone(),
        ..StageOutput::default()
    };
    io::write_json(out.join(files::DENDROGRAM), &serde_json::json!({
        "months": panel.months,
        "dendrogram": det.dendrogram,
        "leaf_order": det.leaf_order,
        "clusters": det.clusters,
    }))?;
    o.push(out.join(files::DENDROGRAM));
    io::write_json(out.join(files::VALIDATION), &det.validation)?;
    o.push(out.join(files::VALIDATION));
    let labels: Vec<String> = det.leaf_order.iter().map(|i| panel.months[*i].to_string()).collect();
    io::write_labelled_matrix(out.join(files::ORDERED_DISSIMILARITY), &labels, &det.ordered_dissimilarity)?;
    o.push(out.join(files::ORDERED_DISSIMILARITY));
    write_regimes(&det.regimes, out, &mut o)?;
    Ok(o)
}

fn write_league(rows: &[LeagueRow], out: &Path, o: &mut StageOutput) -> Result<()> {
    let path = out.join(files::LEAGUE);
    let header: Vec<String> = [
        "runs",
        "median_accuracy",
        "mean_accuracy",
        "median_highvol_as_calm",
        "calm_as_calm",
        "calm_as_highvol",
        "highvol_as_calm",
        "highvol_as_highvol",
    ]
    .map(String::from)
    .to_vec();
    let keys: Vec<String> = rows.iter().map(|r| r.detector.as_str().to_string()).collect();
    let values = DMatrix::from_fn(rows.len(), header.len(), |i, j| {
        let r = &rows[i];
        match j {
            0 => r.runs as f64,
            1 => r.median_accuracy,
            2 => r.mean_accuracy,
            3 => r.median_highvol_as_calm,
            k => r.mean_cells[(k - 4) / 2][(k - 4) % 2],
        }
    });
    io::write_columns(&path, "detector", &header, &keys, &values)?;
    o.push(path);
    Ok(())
}

/// Scores label files against row-level truth and ranks them.
pub fn stage_evaluate_predictions(truth: &Path, predictions: &[PathBuf], out: &Path) -> Result<StageOutput> {
    let truth = io::read_truth(truth)?;
    let mut o = StageOutput::default();
    let mut scored: Vec<(Detector, ConfusionMatrix)> = Vec::new();
    for p in predictions {
        let regimes = io::read_regimes(p)?;
        let m = score_rows(&regimes, &truth.months, &truth.high_vol)?;
        if m.total < truth.months.len() {
            o.warnings.push(format!(
                "{}: {} of {} rows fall in unlabelled months and are not scored",
                p.display(),
                truth.months.len() - m.total,
                truth.months.len()
            ));
        }
        scored.push((regimes.detector, m));
    }
    let mut rows: Vec<LeagueRow> = scored.iter().map(|(d, m)| league_row(*d, &[m])).collect();
    rows.sort_by(|a, b| b.median_accuracy.total_cmp(&a.median_accuracy));
    io::write_json(out.join(files::CONFUSION), &serde_json::json!({
        "matrices": scored.iter().map(|(d, m)| serde_json::json!({"detector": d, "confusion": m})).collect::<Vec<_>>(),
    }))?;
    o.push(out.join(files::CONFUSION));
    write_league(&rows, out, &mut o)?;
    Ok(o)
}

/// Monte-Carlo league table over `cfg.runs` synthetic datasets.
pub fn stage_evaluate_monte_carlo(cfg: &EvaluationConfig, seed: u64, out: &Path) -> Result<StageOutput> {
    let eval = evaluation::evaluate(cfg, seed)?;
    let mut o = StageOutput::default();
    let filtered_cheaper = eval
        .runs
        .iter()
        .filter(|r| r.backtest.filtered.total_costs_bp <= r.backtest.unfiltered.total_costs_bp)
        .count();
    o.warnings.push(format!(
        "truth-filtered costs <= unfiltered on {filtered_cheaper} of {} runs",
        eval.runs.len()
    ));
    io::write_json(out.join(files::EVALUATION), &eval)?;
    o.push(out.join(files::EVALUATION));
    write_league(&eval.league, out, &mut o)?;
    Ok(o)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestSummary {
    pub instrument: String,
    pub detector: Detector,
    pub costs: CostParams,
    pub days: usize,
    /// Days dropped because their month carries no regime label.
    pub uncovered_days: usize,
    pub unfiltered: StrategySummary,
    pub filtered: StrategySummary,
}

/// Daily momentum strategy on one instrument of a price panel, with and
/// without the regime filter. Days outside the labelled months are dropped.
pub fn stage_backtest(
    prices: &Path,
    instrument: Option<&str>,
    regimes: &Path,
    costs: &CostParams,
    out: &Path,
) -> Result<StageOutput> {
    let panel = io::read_price_panel(prices)?;
    let j = match instrument {
        Some(id) => panel
            .instruments
            .iter()
            .position(|i| i == id)
            .ok_or_else(|| Error::MissingColumn {
                path: prices.to_path_buf(),
                column: id.to_string(),
            })?,
        None => 0,
    };
    let id = panel.instruments[j].clone();
    let series = PriceSeries::new(
        id.clone(),
        panel
            .timestamps
            .iter()
            .zip(panel.log_prices.column(j).iter())
            .map(|(t, lp)| (*t, lp.exp()))
            .collect(),
    )?;
    let labels = io::read_regimes(regimes)?;
    let bars = DailyBars::from_series(&series);
    let span = covered_span(&bars.timestamps, &labels)?;
    let ts = &bars.timestamps[span.clone()];
    let px = &bars.closes[span.clone()];
    let vol = &bars.volatility[span.clone()];
    let signal = momentum_signal(px)?;
    let filtered = apply_regime_filter(ts, &signal, &labels)?;
    let plain = run_backtest(ts, px, &signal, Some(vol), costs)?;
    let filt = run_backtest(ts, px, &filtered, Some(vol), costs)?;

    let mut o = StageOutput::default();
    let uncovered = bars.closes.len() - px.len();
    if uncovered > 0 {
        o.warnings.push(format!("{uncovered} days outside the labelled months dropped"));
    }
    let header: Vec<String> = ["price", "volatility", "position", "filtered_position", "equity", "filtered_equity"]
        .map(String::from)
        .to_vec();
    let keys: Vec<String> = ts.iter().map(io::format_timestamp).collect();
    let values = DMatrix::from_fn(ts.len(), header.len(), |i, c| match c {
        0 => px[i],
        1 => vol[i],
        2 => plain.positions[i] as u8 as f64,
        3 => filt.positions[i] as u8 as f64,
        4 => plain.equity_curve[i],
        _ => filt.equity_curve[i],
    });
    io::write_columns(out.join(files::EQUITY), "timestamp", &header, &keys, &values)?;
    o.push(out.join(files::EQUITY));
    write_trades(out.join(files::TRADES), &[("unfiltered", &plain), ("filtered", &filt)])?;
    o.push(out.join(files::TRADES));
    io::write_json(out.join(files::BACKTEST_SUMMARY), &BacktestSummary {
        instrument: id,
        detector: labels.detector,
        costs: *costs,
        days: px.len(),
        uncovered_days: uncovered,
        unfiltered: (&plain).into(),
        filtered: (&filt).into(),
    })?;
    o.push(out.join(files::BACKTEST_SUMMARY));
    Ok(o)
}

fn write_trades(path: PathBuf, strategies: &[(&str, &StrategyResult)]) -> Result<()> {
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["strategy", "index", "timestamp", "direction", "cost_bp"])?;
    for (name, r) in strategies {
        for t in &r.trades {
            let dir = match t.direction {
                Direction::Buy => "buy",
                Direction::Sell => "sell",
            };
            w.write_record([
                name.to_string(),
                t.index.to_string(),
                io::format_timestamp(&t.timestamp),
                dir.to_string(),
                t.cost_bp.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

// ------------------------------------------------------------- pipeline

/// Runs the enabled stages in dependency order and writes the manifest.
/// A failing stage stops the run; the manifest then lists the stages that
/// completed and the error, and the error is returned.
pub fn run_pipeline(cfg: &RunConfig) -> Result<Manifest> {
    cfg.validate()?;
    let out = cfg.out_dir();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let s = &cfg.stages;
    let synthetic = cfg.input.source == InputSource::Synthetic;
    let seed = cfg.seed.unwrap_or(0);
    let path = |f: &str| out.join(f);

    type Stage<'a> = (&'static str, Box<dyn Fn() -> Result<StageOutput> + 'a>);
    let mut plan: Vec<Stage> = Vec::new();
    if s.ingest {
        if synthetic {
            plan.push(("ingest", Box::new(|| {
                stage_simulate(cfg.evaluate.rows, cfg.evaluate.assets, &cfg.synthetic, stage_seed(seed, "simulate"), &out)
            })));
        } else {
            plan.push(("ingest", Box::new(|| stage_ingest(&cfg.input.prices, &cfg.input.formats()?, &out))));
        }
    }
    if s.fracdiff {
        plan.push(("fracdiff", Box::new(|| stage_fracdiff(&path(files::PRICES), &cfg.fracdiff, &out))));
    }
    if s.rcov {
        plan.push(("rcov", Box::new(|| {
            let src = if s.fracdiff || (!synthetic && !s.ingest && path(files::FRACDIFF).exists()) {
                files::FRACDIFF
            } else {
                files::RETURNS
            };
            stage_rcov(&path(src), cfg.rcov, false, &out)
        })));
    }
    if s.pca {
        plan.push(("pca", Box::new(|| stage_pca(&path(files::RCOV), cfg.pca.components, &out))));
    }
    if s.detect_vlstar {
        plan.push(("detect_vlstar", Box::new(|| stage_detect_vlstar(&path(files::SCORES_COVARIANCE), &cfg.vlstar, &out))));
    }
    if s.detect_agnes {
        plan.push(("detect_agnes", Box::new(|| {
            stage_detect_agnes(&path(files::SCORES_METRIC), &cfg.agnes, stage_seed(seed, "hopkins"), &out)
        })));
    }
    if s.detect_tvar {
        plan.push(("detect_tvar", Box::new(|| {
            let fit = path(files::VLSTAR_FIT);
            let fit = fit.exists().then_some(fit);
            stage_detect_tvar(&path(files::SCORES_COVARIANCE), fit.as_deref(), &cfg.tvar, &out)
        })));
    }
    if s.evaluate {
        plan.push(("evaluate", Box::new(|| stage_evaluate_monte_carlo(&cfg.evaluation_config(), stage_seed(seed, "evaluate"), &out))));
    }
    if s.backtest {
        plan.push(("backtest", Box::new(|| {
            stage_backtest(
                &path(files::PRICES),
                cfg.backtest.instrument.as_deref(),
                &path(&files::regimes(cfg.backtest.detector)),
                &cfg.backtest.costs(),
                &out,
            )
        })));
    }

    let mut manifest = Manifest {
        package_version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: cfg.hash(),
        seed: cfg.seed,
        ok: true,
        stages: Vec::new(),
    };
    let mut failure = None;
    for (name, run) in plan {
        info!("stage {name}");
        let result = run();
        let rec = stage_record(&out, name, &result)?;
        manifest.stages.push(rec);
        if let Err(e) = result {
            manifest.ok = false;
            failure = Some(e);
            break;
        }
    }
    io::write_json(out.join(files::MANIFEST), &manifest)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic_config(out: &Path) -> RunConfig {
        let mut cfg = RunConfig::from_toml(
            r#"
            seed = 7
            [input]
            source = "synthetic"
            [stages]
            evaluate = true
            [evaluate]
            rows = 2000
            runs = 2
            [backtest]
            detector = "vlstar"
            "#,
        )
        .unwrap();
        cfg.out = Some(out.to_path_buf());
        cfg
    }

    #[test]
    fn defaults_and_unknown_keys() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.vlstar.gamma_max, 100.0);
        assert!(RunConfig::from_toml("[vlstar]\ngama_max = 3").is_err());
        assert!(RunConfig::from_toml("[stages]\ndetect = true").is_err());
        let c = RunConfig::from_toml("[agnes]\nmetric = \"euclidean\"\n[backtest]\nscaling = \"raw\"").unwrap();
        assert_eq!(c.agnes.metric, DistanceMetric::Euclidean);
        assert_eq!(c.backtest.scaling, VolatilityScaling::Raw);
    }

    #[test]
    fn hash_ignores_output_directory() {
        let mut a = RunConfig::default();
        let mut b = RunConfig::default();
        a.out = Some("x".into());
        b.out = Some("y".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = Some(1);
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn missing_input_fails_validation_before_any_stage() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::default();
        cfg.seed = Some(1);
        cfg.out = Some(dir.path().join("out"));
        cfg.input.prices = vec![dir.path().join("a.csv"), dir.path().join("b.csv")];
        assert!(matches!(run_pipeline(&cfg), Err(Error::MissingFile(_))));
        assert!(!dir.path().join("out").exists());
    }

    #[test]
    fn stochastic_stage_needs_seed() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = synthetic_config(dir.path());
        cfg.seed = None;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn synthetic_run_is_reproducible_and_stage_wise_equal() {
        let dir = tempfile::tempdir().unwrap();
        let a = run_pipeline(&synthetic_config(&dir.path().join("a"))).unwrap();
        let b = run_pipeline(&synthetic_config(&dir.path().join("b"))).unwrap();
        assert_eq!(a, b);
        assert!(a.ok);
        let names: Vec<&str> = a.stages.iter().map(|s| s.stage.as_str()).collect();
        assert_eq!(names, ["ingest", "rcov", "pca", "detect_vlstar", "detect_agnes", "detect_tvar", "evaluate", "backtest"]);
        assert!(dir.path().join("a").join(files::LEAGUE).exists());

        // rerun only the detectors from the persisted scores
        let mut c = synthetic_config(&dir.path().join("a"));
        c.stages.ingest = false;
        c.stages.rcov = false;
        c.stages.pca = false;
        c.stages.evaluate = false;
        let partial = run_pipeline(&c).unwrap();
        for st in &partial.stages {
            let full = a.stages.iter().find(|x| x.stage == st.stage).unwrap();
            assert_eq!(st.artifacts, full.artifacts, "stage {}", st.stage);
        }
    }

    #[test]
    fn failing_stage_writes_partial_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = synthetic_config(dir.path());
        cfg.stages.evaluate = false;
        cfg.evaluate.rows = 300; // too few months for VLSTAR
        let err = run_pipeline(&cfg).unwrap_err();
        assert!(matches!(err, Error::TooShort { .. }), "{err}");
        let m: Manifest = io::read_json(dir.path().join(files::MANIFEST)).unwrap();
        assert!(!m.ok);
        let last = m.stages.last().unwrap();
        assert_eq!(last.stage, "detect_vlstar");
        assert!(last.error.is_some());
        assert!(m.stages[..m.stages.len() - 1].iter().all(|s| s.ok));
    }
}
