//! Threshold VAR baseline on covariance scores, using the transition
//! variable picked by the linearity test.

use regime_detect::detect::{covariance_pca, detect_tvar, select_transition_variable};
use regime_detect::realized_cov::{realized_covariance, RcovOptions};
use regime_detect::synthetic::{generate, score_rows, SyntheticParams};
use regime_detect::tvar::{linear_ssr, TvarOptions};

fn main() -> regime_detect::Result<()> {
    let data = generate(2000, 5, &SyntheticParams::default(), 3)?;
    let (rcov, _) = realized_covariance(&data.to_return_panel()?, RcovOptions::default())?;
    let (_, scores) = covariance_pca(&rcov, 3)?;
    let opts = TvarOptions::default();
    let s = select_transition_variable(&scores, opts.lags)?;
    let det = detect_tvar(&scores, Some(&s), &opts)?;
    let lin = linear_ssr(&scores.scores, None, opts.lags)?;
    println!(
        "threshold on `{}` = {:.4e}; SSR {:.4e} vs linear {:.4e}; {} candidates skipped",
        det.fit.threshold_variable_id, det.fit.threshold, det.fit.ssr, lin, det.fit.skipped_candidates
    );
    let upper = det.fit.regime_indicator.iter().filter(|u| **u).count();
    println!("{upper} of {} months above the threshold", det.fit.regime_indicator.len());
    let m = score_rows(&det.regimes, &data.row_months(), data.row_truth())?;
    println!("accuracy {:.3}, high-vol rows called calm {:.3}", m.accuracy, m.highvol_as_calm);
    Ok(())
}
