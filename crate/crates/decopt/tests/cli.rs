//! The `decopt` binary: subcommands, flags and exit statuses.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use decopt::experiment::ExperimentConfig;

fn decopt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_decopt")).args(args).output().expect("binary runs")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn shipped_configs_parse() {
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_str().unwrap().to_owned();
        if name.starts_with("worst") {
            let _: decopt::worstcase::WorstInstanceSpec = decopt::io::read_json(&path).unwrap();
        } else {
            ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }
}

#[test]
fn check_passes() {
    let o = decopt(&["check", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 8, "{text}");
}

#[test]
fn solve_writes_one_csv_row() {
    let cfg = configs().join("solve_vfl.json");
    let o = decopt(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], decopt::experiment::csv_header().join(","));
    assert!(lines[1].contains(",coupled,apapc,"), "{}", lines[1]);
}

#[test]
fn missing_config_is_an_io_error() {
    let o = decopt(&["solve", "--config", "/definitely/not/here.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/definitely/not/here.json"), "{}", stderr(&o));
    let o = decopt(&["sweep"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", "{ \"instance\": ");
    assert_eq!(decopt(&["solve", "--config", &bad]).status.code(), Some(2));
    let unknown = write(dir.path(), "unknown.json", r#"{ "instance": { "random": {} }, "regime": "triangle" }"#);
    assert_eq!(decopt(&["solve", "--config", &unknown]).status.code(), Some(2));
}

#[test]
fn iteration_cap_is_a_solver_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cap.json", r#"{ "instance": { "random": {} }, "solver": { "max_iters": 3 } }"#);
    let o = decopt(&["solve", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn sweep_output_is_byte_identical_and_seed_matters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("sweep_kappa_w.json");
    let cfg = cfg.to_str().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    let o = decopt(&["sweep", "--config", cfg, "--out", a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("slope of"), "{}", stdout(&o));
    decopt(&["sweep", "--config", cfg, "--out", b.to_str().unwrap()]);
    decopt(&["sweep", "--config", cfg, "--seed", "5", "--out", c.to_str().unwrap()]);
    let (a, b, c) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap(), std::fs::read(c).unwrap());
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 5);
}

#[test]
fn eps_flag_reaches_the_solver() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.json", r#"{ "instance": { "random": { "n": 3 } } }"#);
    let out = decopt(&["solve", "--config", &cfg, "--eps", "1e-4"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let header = decopt::experiment::csv_header();
    let col = |name: &str| row[header.iter().position(|h| *h == name).unwrap()];
    assert_eq!(col("eps").parse::<f64>().unwrap(), 1e-4);
    assert_eq!(col("target_accuracy").parse::<f64>().unwrap(), 1e-4);
}

#[test]
fn spectrum_and_worstcase_report() {
    let o = decopt(&["spectrum", "--config", configs().join("solve_mixed.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    for key in ["sigma_max_sq", "sigma_min_plus_sq", "kappa_B", "kappa_K", "kappa_W", "kappa_AC_tilde"] {
        assert!(text.lines().any(|l| l.starts_with(&format!("{key} "))), "{key} missing in {text}");
    }
    let o = decopt(&["worstcase", "--config", configs().join("worst_shared.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["rho"].as_f64().unwrap() > 0.0);
}
