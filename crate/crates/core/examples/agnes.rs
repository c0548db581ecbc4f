//! Ward clustering with Manhattan distances: a two-blob example, then the
//! metric scores of a synthetic dataset with Hopkins, silhouette and Dunn.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use regime_detect::cluster::{agnes, select_k_by_dunn, validate, DistanceMetric};
use regime_detect::detect::{detect_agnes, metric_pca};
use regime_detect::realized_cov::{realized_covariance, RcovOptions};
use regime_detect::synthetic::{generate, score_rows, SyntheticParams};

fn main() -> regime_detect::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let points = DMatrix::from_fn(40, 2, |i, _| {
        let centre = if i < 20 { 0.0 } else { 10.0 / 2f64.sqrt() };
        let z: f64 = StandardNormal.sample(&mut rng);
        centre + z
    });
    let tree = agnes(&points, DistanceMetric::Manhattan)?;
    let h = tree.heights();
    println!("two blobs: last merge {:.2}, previous {:.2}", h[h.len() - 1], h[h.len() - 2]);
    let (k, dunn) = select_k_by_dunn(&tree, &points, DistanceMetric::Manhattan, 6)?;
    println!("Dunn picks k = {k} (index {dunn:.3})");
    let v = validate(&points, &tree.cut(2)?, DistanceMetric::Manhattan, None, 1)?;
    println!("Hopkins {:.3}, mean silhouette {:.3}", v.hopkins, v.mean_silhouette);

    let data = generate(2000, 5, &SyntheticParams::default(), 3)?;
    let (rcov, _) = realized_covariance(&data.to_return_panel()?, RcovOptions::default())?;
    let (_, scores) = metric_pca(&rcov, 3)?;
    let det = detect_agnes(&scores, DistanceMetric::Manhattan, None, 11)?;
    println!(
        "synthetic metrics: Hopkins {:.3}, negative silhouettes {:.1}%, Dunn {:?}",
        det.validation.hopkins,
        100.0 * det.validation.negative_silhouette_share,
        det.validation.dunn
    );
    let m = score_rows(&det.regimes, &data.row_months(), data.row_truth())?;
    println!("accuracy {:.3}, high-vol rows called calm {:.3}", m.accuracy, m.highvol_as_calm);
    Ok(())
}
