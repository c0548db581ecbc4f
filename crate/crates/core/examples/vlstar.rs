//! VLSTAR on the covariance scores of one synthetic dataset: linearity tests
//! per candidate transition variable, the fitted logistic transition and the
//! resulting regime labels scored against the truth.

use regime_detect::detect::{covariance_pca, detect_vlstar};
use regime_detect::realized_cov::{realized_covariance, RcovOptions};
use regime_detect::synthetic::{generate, score_rows, SyntheticParams};
use regime_detect::vlstar::VlstarOptions;

fn main() -> regime_detect::Result<()> {
    let data = generate(2000, 5, &SyntheticParams::default(), 3)?;
    let (rcov, _) = realized_covariance(&data.to_return_panel()?, RcovOptions::default())?;
    let (_, scores) = covariance_pca(&rcov, 3)?;
    let det = detect_vlstar(&scores, &VlstarOptions::default())?;
    let fit = &det.fit;
    for t in &fit.linearity_tests {
        println!("{:<10} F = {:8.3}  p = {:.4}", t.candidate, t.statistic, t.p_value);
    }
    println!(
        "transition `{}`: gamma {:.3} c {:.4} (standardised gamma {:.3} c {:.3}), SSR {:.4e}, converged {}",
        fit.transition_variable_id,
        fit.logistic.gamma,
        fit.logistic.c,
        fit.logistic_standardized.gamma,
        fit.logistic_standardized.c,
        fit.ssr,
        fit.converged
    );
    println!("mu0 {:?}", fit.mu0().iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>());
    println!("mu1 {:?}", fit.mu1().iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>());
    let m = score_rows(&det.regimes, &data.row_months(), data.row_truth())?;
    println!(
        "high-vol share {:.2}; accuracy {:.3}, high-vol rows called calm {:.3}",
        det.regimes.high_vol_share(),
        m.accuracy,
        m.highvol_as_calm
    );
    for w in &det.regimes.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
