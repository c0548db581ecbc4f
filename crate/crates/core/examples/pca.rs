//! The two PCA feature pipelines: raw covariances (for VLSTAR and TVAR) and
//! standardised correlation metrics (for clustering).

use regime_detect::detect::{covariance_pca, metric_pca};
use regime_detect::features::cumulative_variance;
use regime_detect::realized_cov::{realized_covariance, RcovOptions};
use regime_detect::synthetic::{generate, SyntheticParams};

fn main() -> regime_detect::Result<()> {
    let data = generate(2000, 5, &SyntheticParams::default(), 7)?;
    let (rcov, _) = realized_covariance(&data.to_return_panel()?, RcovOptions::default())?;
    for (name, (model, scores)) in [
        ("covariances", covariance_pca(&rcov, 3)?),
        ("metrics", metric_pca(&rcov, 3)?),
    ] {
        println!(
            "{name:<12} ratios {:?}  first three explain {:.1}%",
            model.explained_variance_ratio.iter().map(|r| (r * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            100.0 * cumulative_variance(&model, 3)?
        );
        println!("             first loading vector {:?}",
            model.loadings.column(0).iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>());
        println!("             scores {} x {}", scores.scores.nrows(), scores.scores.ncols());
    }
    Ok(())
}
