use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn tapa(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tapa"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("spawn tapa")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn files_with_ext(dir: &Path, ext: &str) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(ext))
        .collect();
    names.sort();
    names
}

const SMALL_HIST: [&str; 4] = ["--set", "hist_pairs=2000", "--set", "dim=32"];

#[test]
fn bias_hist_two_encodings_writes_three_csvs_and_one_svg() {
    let dir = TempDir::new().unwrap();
    let o = tapa(dir.path(), &[&["bias-hist"][..], &SMALL_HIST].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csvs = files_with_ext(dir.path(), ".csv");
    assert_eq!(csvs, ["hist_rope.csv", "hist_summary.csv", "hist_tapa.csv"]);
    assert_eq!(files_with_ext(dir.path(), ".svg").len(), 1);

    let body = fs::read_to_string(dir.path().join("hist_rope.csv")).unwrap();
    assert_eq!(body.lines().next(), Some("bin_left,bin_right,count"));
    let summary = fs::read_to_string(dir.path().join("hist_summary.csv")).unwrap();
    assert_eq!(summary.lines().next(), Some("encoding,mean,std,n"));
    assert_eq!(report(dir.path())["pass"], Value::Bool(true));
}

#[test]
fn bias_hist_is_byte_deterministic() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let args = [&["bias-hist", "--seed", "7"][..], &SMALL_HIST].concat();
    assert_eq!(code(&tapa(a.path(), &args)), 0);
    let mut args_b = args.clone();
    args_b.extend(["--workers", "1"]);
    assert_eq!(code(&tapa(b.path(), &args_b)), 0);
    for name in files_with_ext(a.path(), "") {
        let x = fs::read(a.path().join(&name)).unwrap();
        let y = fs::read(b.path().join(&name)).unwrap();
        assert!(x == y, "{name} differs between runs");
    }
}

#[test]
fn only_lemma1_keeps_exactly_the_lemma1_families() {
    let dir = TempDir::new().unwrap();
    let o = tapa(dir.path(), &["verify", "--only", "lemma1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(dir.path());
    let mut names: Vec<&str> = r["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert!(!names.is_empty());
    names.sort();
    names.dedup();
    assert_eq!(names, ["lemma1_cos", "lemma1_sin"]);
}

#[test]
fn lemma_grid_with_large_theta0_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let o = tapa(
        dir.path(),
        &[
            "verify",
            "--only",
            "lemma1",
            "--set",
            "lemma_theta0=[0.01, 0.2]",
        ],
    );
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("θ0 < 1/10"));
}

#[test]
fn empty_distance_list_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let o = tapa(dir.path(), &["decay", "--set", "curve_distances=[]"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn grad_check_exit_codes() {
    let dir = TempDir::new().unwrap();
    let ok = tapa(dir.path(), &["grad-check", "--set", "grad_trials=100"]);
    assert_eq!(code(&ok), 0);
    let rows = fs::read_to_string(dir.path().join("grad_check.csv")).unwrap();
    assert_eq!(rows.lines().count(), 101);
    assert_eq!(report(dir.path())["pass"], Value::Bool(true));

    let strict = tapa(
        dir.path(),
        &[
            "grad-check",
            "--set",
            "grad_trials=100",
            "--set",
            "grad_tolerance=0",
        ],
    );
    assert_eq!(code(&strict), 1);
    assert!(String::from_utf8_lossy(&strict.stderr).contains("FAIL"));
    assert_eq!(report(dir.path())["pass"], Value::Bool(false));

    let none = tapa(dir.path(), &["grad-check", "--set", "grad_trials=0"]);
    assert_eq!(code(&none), 2);
}

#[test]
fn usage_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&tapa(dir.path(), &["frobnicate"])), 2);
    assert_eq!(code(&tapa(dir.path(), &["verify", "--only", "lemma9"])), 2);
    assert_eq!(
        code(&tapa(dir.path(), &["verify", "--set", "no_such_key=1"])),
        2
    );
    assert_eq!(code(&tapa(dir.path(), &["decay", "--format", "pdf"])), 2);
    assert_eq!(code(&tapa(dir.path(), &["decay", "--only", "lemma1"])), 2);
}

#[test]
fn config_file_is_read() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "grad_trials = 5\nseed = 3\n").unwrap();
    let o = tapa(
        dir.path(),
        &["grad-check", "--config", cfg.to_str().unwrap()],
    );
    assert_eq!(code(&o), 0);
    let r = report(dir.path());
    assert_eq!(r["seed"], Value::from(3));
    assert_eq!(r["checks"].as_array().unwrap().len(), 5);

    fs::write(&cfg, "grad_trials = \"many\"\n").unwrap();
    let bad = tapa(
        dir.path(),
        &["grad-check", "--config", cfg.to_str().unwrap()],
    );
    assert_eq!(code(&bad), 2);
}

#[test]
fn decay_oracle_columns_match_closed_forms() {
    use tapa_core::encodings::{RopeParams, TapaParams};
    use tapa_core::theory::{gamma_bias, tapa_expected_score};
    use tapa_core::SamplerSpec;

    let dir = TempDir::new().unwrap();
    let o = tapa(
        dir.path(),
        &[
            "decay",
            "--set",
            "curve_samples=2000",
            "--set",
            "curve_distances=[0, 3, 50]",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let body = fs::read_to_string(dir.path().join("decay.csv")).unwrap();
    let mut lines = body.lines();
    assert_eq!(lines.next(), Some("encoding,distance,estimate,ci95,oracle"));

    let rope = RopeParams::new(8, 2e-6).unwrap();
    let tapa_p = TapaParams::quadratic(8, 0.5, 0.1).unwrap();
    let spec = SamplerSpec::new(8, 1.0, 0.0, 1.0, 20_240_601).unwrap();
    let mut seen = 0;
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let d: f64 = f[1].parse().unwrap();
        let oracle: f64 = f[4].parse().unwrap();
        let expected = match f[0] {
            "rope" => gamma_bias(d, 1.0, 0.0, &rope).unwrap(),
            "tapa" => tapa_expected_score(d, &tapa_p, &spec).unwrap(),
            other => panic!("unexpected encoding {other}"),
        };
        assert_eq!(oracle.to_bits(), expected.to_bits(), "{line}");
        seen += 1;
    }
    assert_eq!(seen, 6);
}
