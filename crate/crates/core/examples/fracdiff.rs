//! Fractional differencing: weights, the d = 1 and d = 0 special cases, and
//! the log-periodogram estimate of d on a random walk and on white noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use regime_detect::fracdiff::{estimate_d, frac_difference, weights};

fn main() -> regime_detect::Result<()> {
    println!("weights d=0.4: {:?}", weights(0.4, 5));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let noise: Vec<f64> = (0..4096).map(|_| StandardNormal.sample(&mut rng)).collect();
    let walk: Vec<f64> = noise
        .iter()
        .scan(0.0, |s, e| {
            *s += e;
            Some(*s)
        })
        .collect();

    let d1 = frac_difference(&walk, 1.0, 100)?;
    let max_err = (1..walk.len()).map(|t| (d1[t] - (walk[t] - walk[t - 1])).abs()).fold(0.0, f64::max);
    println!("d = 1 versus first differences: max abs error {max_err:e}");
    let d0 = frac_difference(&walk, 0.0, 100)?;
    println!("d = 0 is the identity: {}", d0 == walk);

    let est_walk = estimate_d(&walk)?;
    let est_noise = estimate_d(&noise)?;
    println!(
        "estimated d: random walk {:.3}, white noise {:.3} (bandwidth {})",
        est_walk.d, est_noise.d, est_noise.bandwidth
    );
    Ok(())
}
