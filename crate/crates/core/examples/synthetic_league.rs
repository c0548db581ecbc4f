//! Monte-Carlo league table of the three detectors on synthetic datasets
//! with known regimes. Usage: `synthetic_league [runs] [seed]`.

use regime_detect::evaluation::{evaluate, EvaluationConfig};

fn main() -> regime_detect::Result<()> {
    let mut args = std::env::args().skip(1);
    let runs = args.next().and_then(|a| a.parse().ok()).unwrap_or(20);
    let seed = args.next().and_then(|a| a.parse().ok()).unwrap_or(2024);
    let cfg = EvaluationConfig { runs, ..EvaluationConfig::default() };
    let eval = evaluate(&cfg, seed)?;
    println!("{runs} datasets, T = {}, n = {}", cfg.rows, cfg.assets);
    println!("{:<8} {:>9} {:>9} {:>13}", "detector", "median", "mean", "hv-as-calm");
    for row in &eval.league {
        println!(
            "{:<8} {:>9.3} {:>9.3} {:>13.3}",
            row.detector.as_str(),
            row.median_accuracy,
            row.mean_accuracy,
            row.median_highvol_as_calm
        );
    }
    let share: Vec<f64> = eval.runs.iter().map(|r| r.truth_high_vol_share).collect();
    println!("mean true high-vol share {:.3}", share.iter().sum::<f64>() / share.len() as f64);
    Ok(())
}
