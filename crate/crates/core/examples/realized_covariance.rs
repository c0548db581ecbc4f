//! Monthly realized covariances from synthetic intraday returns, their
//! correlation and `1 - rho^2` transforms, and the half-vectorised panel.

use regime_detect::realized_cov::{realized_covariance, to_correlation, to_metric, vech, RcovOptions};
use regime_detect::synthetic::{generate, SyntheticParams};

fn main() -> regime_detect::Result<()> {
    let data = generate(500, 3, &SyntheticParams::default(), 42)?;
    let panel = data.to_return_panel()?;
    let (rcov, warnings) = realized_covariance(&panel, RcovOptions::default())?;
    println!("{} months from {} rows, {} warnings", rcov.len(), panel.n_rows(), warnings.len());
    println!("vech columns: {}", rcov.vech_header().join(", "));
    for t in 0..3 {
        let m = &rcov.matrices[t];
        let corr = to_correlation(m)?;
        println!(
            "{}  trace {:.4}  min eig {:+.2e}  vech {:?}",
            rcov.months[t],
            m.trace(),
            rcov.min_eigenvalues[t],
            vech(m)?.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>()
        );
        println!("         1 - rho^2 off-diagonal: {:.4} {:.4} {:.4}",
            to_metric(&corr)[(1, 0)], to_metric(&corr)[(2, 0)], to_metric(&corr)[(2, 1)]);
    }
    let min = rcov.min_eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    println!("smallest eigenvalue over all months before repair: {min:e}");
    Ok(())
}
