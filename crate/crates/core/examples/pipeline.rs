//! Full synthetic run from a TOML config: simulate, covariances, PCA, the
//! three detectors, a small league table and the backtest, with the
//! manifest printed at the end.

use regime_detect::pipeline::{run_pipeline, RunConfig};

const CONFIG: &str = r#"
seed = 11

[input]
source = "synthetic"

[stages]
evaluate = true

[evaluate]
rows = 2000
assets = 5
runs = 5

[backtest]
detector = "vlstar"
"#;

fn main() -> regime_detect::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut cfg = RunConfig::from_toml(CONFIG)?;
    cfg.out = Some(dir.path().to_path_buf());
    let manifest = run_pipeline(&cfg)?;
    println!("config sha256 {}", manifest.config_sha256);
    for stage in &manifest.stages {
        println!("{:<14} {}", stage.stage, if stage.ok { "ok" } else { "failed" });
        for a in &stage.artifacts {
            println!("    {:<34} {:>8} bytes  {}", a.path, a.bytes, &a.sha256[..16]);
        }
        for w in &stage.warnings {
            println!("    warning: {w}");
        }
    }
    print!("{}", std::fs::read_to_string(dir.path().join("league.csv")).expect("league table"));
    Ok(())
}
