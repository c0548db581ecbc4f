use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use regime_detect::fracdiff::DifferencingTarget;
use regime_detect::market_data::CsvFormat;
use regime_detect::pipeline::{self, files, RunConfig, StageOutput};
use regime_detect::regime::Detector;
use regime_detect::seeds::stage_seed;
use regime_detect::{Error, Result};

#[derive(Parser)]
#[command(name = "regimes", version, about = "Regime detection from realized covariances")]
struct Cli {
    /// TOML run configuration; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `out` in the config (default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load single-instrument price CSVs and write aligned price and return panels.
    Ingest {
        /// Price files; defaults to `[input] prices`.
        #[arg(long = "prices", num_args = 1..)]
        prices: Vec<PathBuf>,
        /// Instrument ids, one per file (default: file stems).
        #[arg(long = "id")]
        ids: Vec<String>,
        #[arg(long)]
        timestamp_column: Option<String>,
        #[arg(long)]
        price_column: Option<String>,
    },
    /// Estimate d per instrument and fractionally difference the price panel.
    Fracdiff {
        #[arg(long)]
        prices: Option<PathBuf>,
        /// Difference returns instead of log prices.
        #[arg(long)]
        on_returns: bool,
    },
    /// Monthly realized covariances of a return panel.
    Rcov {
        #[arg(long)]
        returns: Option<PathBuf>,
        /// Also write every monthly matrix as JSON.
        #[arg(long)]
        dump_matrices: bool,
    },
    /// Principal components of the covariance and metric panels.
    Pca {
        #[arg(long)]
        rcov: Option<PathBuf>,
        #[arg(long)]
        components: Option<usize>,
    },
    /// Fit VLSTAR on covariance scores and label regimes.
    DetectVlstar {
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// Ward clustering of metric scores with cluster validation.
    DetectAgnes {
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// Fit the threshold VAR baseline on covariance scores.
    DetectTvar {
        #[arg(long)]
        scores: Option<PathBuf>,
        /// VLSTAR fit whose transition variable to use; otherwise it is
        /// selected again by the linearity test.
        #[arg(long)]
        vlstar_fit: Option<PathBuf>,
    },
    /// Draw one synthetic dataset with known regimes.
    Simulate {
        #[arg(long)]
        rows: Option<usize>,
        #[arg(long)]
        assets: Option<usize>,
    },
    /// Score label files against truth, or run the Monte-Carlo league table
    /// when no predictions are given.
    Evaluate {
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long = "predictions", num_args = 1..)]
        predictions: Vec<PathBuf>,
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Momentum strategy with and without the regime filter.
    Backtest {
        #[arg(long)]
        prices: Option<PathBuf>,
        #[arg(long)]
        regimes: Option<PathBuf>,
        #[arg(long)]
        instrument: Option<String>,
    },
    /// Every enabled stage in order, with a manifest.
    Run,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    let out = cfg.out_dir();
    let at = |explicit: Option<PathBuf>, file: &str| explicit.unwrap_or_else(|| out.join(file));
    let (name, result) = match cli.command {
        Command::Run => {
            let manifest = pipeline::run_pipeline(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&manifest)?);
            return Ok(());
        }
        Command::Ingest {
            prices,
            ids,
            timestamp_column,
            price_column,
        } => {
            let mut input = cfg.input.clone();
            if !prices.is_empty() {
                input.prices = prices;
                input.ids = ids;
            }
            if let Some(c) = timestamp_column {
                input.timestamp_column = c;
            }
            if let Some(c) = price_column {
                input.price_column = c;
            }
            let formats: Vec<CsvFormat> = input.formats()?;
            ("ingest", pipeline::stage_ingest(&input.prices, &formats, &out))
        }
        Command::Fracdiff { prices, on_returns } => {
            let mut opts = cfg.fracdiff.clone();
            if on_returns {
                opts.target = DifferencingTarget::Returns;
            }
            ("fracdiff", pipeline::stage_fracdiff(&at(prices, files::PRICES), &opts, &out))
        }
        Command::Rcov { returns, dump_matrices } => (
            "rcov",
            pipeline::stage_rcov(&at(returns, files::RETURNS), cfg.rcov, dump_matrices, &out),
        ),
        Command::Pca { rcov, components } => (
            "pca",
            pipeline::stage_pca(&at(rcov, files::RCOV), components.unwrap_or(cfg.pca.components), &out),
        ),
        Command::DetectVlstar { scores } => (
            "detect_vlstar",
            pipeline::stage_detect_vlstar(&at(scores, files::SCORES_COVARIANCE), &cfg.vlstar, &out),
        ),
        Command::DetectAgnes { scores } => {
            let seed = cfg.require_seed("detect-agnes")?;
            (
                "detect_agnes",
                pipeline::stage_detect_agnes(&at(scores, files::SCORES_METRIC), &cfg.agnes, stage_seed(seed, "hopkins"), &out),
            )
        }
        Command::DetectTvar { scores, vlstar_fit } => (
            "detect_tvar",
            pipeline::stage_detect_tvar(&at(scores, files::SCORES_COVARIANCE), vlstar_fit.as_deref(), &cfg.tvar, &out),
        ),
        Command::Simulate { rows, assets } => {
            let seed = cfg.require_seed("simulate")?;
            (
                "simulate",
                pipeline::stage_simulate(
                    rows.unwrap_or(cfg.evaluate.rows),
                    assets.unwrap_or(cfg.evaluate.assets),
                    &cfg.synthetic,
                    stage_seed(seed, "simulate"),
                    &out,
                ),
            )
        }
        Command::Evaluate { truth, predictions, runs } => {
            if predictions.is_empty() {
                let seed = cfg.require_seed("evaluate")?;
                let mut ecfg = cfg.evaluation_config();
                if let Some(r) = runs {
                    ecfg.runs = r;
                }
                ("evaluate", pipeline::stage_evaluate_monte_carlo(&ecfg, stage_seed(seed, "evaluate"), &out))
            } else {
                (
                    "evaluate",
                    pipeline::stage_evaluate_predictions(&at(truth, files::TRUTH), &predictions, &out),
                )
            }
        }
        Command::Backtest {
            prices,
            regimes,
            instrument,
        } => {
            let detector: Detector = cfg.backtest.detector;
            let instrument = instrument.or(cfg.backtest.instrument.clone());
            (
                "backtest",
                pipeline::stage_backtest(
                    &at(prices, files::PRICES),
                    instrument.as_deref(),
                    &at(regimes, &files::regimes(detector)),
                    &cfg.backtest.costs(),
                    &out,
                ),
            )
        }
    };
    report(&out, name, result)
}

fn report(out: &Path, name: &str, result: Result<StageOutput>) -> Result<()> {
    let rec = pipeline::stage_record(out, name, &result)?;
    for w in &rec.warnings {
        log::warn!("{w}");
    }
    result?;
    println!("{}", serde_json::to_string_pretty(&rec).map_err(Error::from)?);
    Ok(())
}
