use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn regimes(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_regimes"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("spawn")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const SYNTHETIC: &str = "seed = 5\n[input]\nsource = \"synthetic\"\n[evaluate]\nrows = 2000\nassets = 3\nruns = 2\n";

#[test]
fn run_is_byte_identical_across_output_dirs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SYNTHETIC);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let oa = regimes(&["run", "--config", &cfg], &a);
    let ob = regimes(&["run", "--config", &cfg], &b);
    assert!(oa.status.success(), "{}", String::from_utf8_lossy(&oa.stderr));
    assert_eq!(oa.stdout, ob.stdout);
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.iter().any(|n| n == "manifest.json"));
    for n in names {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn seed_flag_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let a = regimes(&["simulate", "--seed", "1", "--rows", "200", "--assets", "2"], &dir.path().join("a"));
    let b = regimes(&["simulate", "--seed", "2", "--rows", "200", "--assets", "2"], &dir.path().join("b"));
    assert!(a.status.success() && b.status.success());
    assert_ne!(
        fs::read(dir.path().join("a/returns.csv")).unwrap(),
        fs::read(dir.path().join("b/returns.csv")).unwrap()
    );
}

#[test]
fn missing_input_fails_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[input]\nprices = [\"/nonexistent/p.csv\", \"/nonexistent/q.csv\"]\n");
    let out = dir.path().join("o");
    let o = regimes(&["run", "--config", &cfg], &out);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/p.csv"));
    assert!(!out.join("prices.csv").exists());
}

#[test]
fn stochastic_stage_requires_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = regimes(&["simulate"], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[vlstar]\ngama_grid = 3\n");
    let o = regimes(&["run", "--config", &cfg], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("gama_grid"));
}

#[test]
fn subcommand_reads_previous_stage_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    for args in [
        vec!["simulate", "--seed", "3", "--rows", "2000", "--assets", "3"],
        vec!["rcov"],
        vec!["pca", "--components", "2"],
        vec!["detect-vlstar"],
    ] {
        let o = regimes(&args, out);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let record: serde_json::Value =
        serde_json::from_slice(&regimes(&["detect-tvar"], out).stdout).expect("stage record json");
    assert_eq!(record["stage"], "detect_tvar");
    assert_eq!(record["ok"], true);
    assert!(out.join("regimes_tvar.csv").exists());
}
