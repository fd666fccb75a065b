//! End-to-end runs of the `nlsv` binary on small grids.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nlsv::io::{read_csv, read_trace};
use nlsv::{sample_potential, Grid, PotentialSpec};
use serde_json::Value;

const BASE: &str = r#"
[grid]
n = 16
L = 12.0

[potential]
kind = "gaussian_well"
depth = 2.0
width = 1.0
"#;

struct Run {
    dir: tempfile::TempDir,
}

impl Run {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("run.toml"), config).unwrap();
        Run { dir }
    }

    fn out(&self) -> PathBuf {
        self.dir.path().join("out")
    }

    fn exec(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_nlsv"))
            .args(args)
            .arg("--config")
            .arg(self.dir.path().join("run.toml"))
            .arg("--out")
            .arg(self.out())
            .output()
            .unwrap()
    }

    fn json(&self, name: &str) -> Value {
        serde_json::from_str(&fs::read_to_string(self.out().join(name)).unwrap()).unwrap()
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr_record(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).unwrap_or_else(|_| panic!("not JSON: {}", String::from_utf8_lossy(&out.stderr)))
}

#[test]
fn kato_and_spectrum_artifacts_echo_config() {
    let run = Run::new(BASE);
    let out = run.exec(&["kato"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let kato = run.json("kato.json");
    assert_eq!(kato["config"]["task"], "kato");
    assert_eq!(kato["config"]["run"]["grid"]["n"], 16);

    let out = run.exec(&["spectrum"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let first = fs::read_to_string(run.out().join("eigenvalues.csv")).unwrap();
    assert!(first.starts_with("# config: {"));
    let (header, _) = read_csv(&run.out().join("eigenvalues.csv")).unwrap();
    assert_eq!(header, ["j", "energy", "residual"]);
}

#[test]
fn evolve_writes_a_readable_trace() {
    let run = Run::new(&format!("{BASE}\n[evolve]\nT = 0.1\ndt = 1e-2\nslices = 3\n"));
    let out = run.exec(&["evolve"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = sample_potential(&PotentialSpec::gaussian_well(2.0, 1.0), &Grid::new(16, 12.0).unwrap()).unwrap();
    let trace = read_trace(&run.out().join("evolve_trace"), &v).unwrap();
    assert_eq!(trace.times.len(), 3);
    let summary = run.json("evolve.json");
    assert_eq!(summary["h1_bound"]["holds"], true);
    assert!(summary["conservation"]["mass_drift"].as_f64().unwrap() < 1e-10);
}

#[test]
fn refine_doubles_the_grid() {
    let run = Run::new(&format!("{BASE}\n[evolve]\nT = 0.04\ndt = 2e-2\nslices = 2\n"));
    let out = run.exec(&["evolve", "--refine"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: Value = serde_json::from_str(&fs::read_to_string(run.out().join("evolve_trace/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["grid"]["n"], 32);
    assert_eq!(manifest["dt"], 1e-2);
}

#[test]
fn config_errors_exit_with_code_two() {
    let run = Run::new(&format!("unknown_key = 1\n{BASE}"));
    let out = run.exec(&["kato"]);
    assert_eq!(code(&out), 2);
    assert_eq!(stderr_record(&out)["label"], "config");

    let run = Run::new(BASE);
    let out = run.exec(&["norm-equiv"]);
    assert_eq!(code(&out), 2);
    let record = stderr_record(&out);
    assert_eq!(record["field"], "norm_equiv.seed");
    assert!(Path::new(&run.out().join("error.json")).exists());
}

#[test]
fn decay_past_the_wrap_horizon_is_rejected() {
    let run = Run::new(&format!("{BASE}\n[decay]\ntimes = [1.0, 50.0]\ndt = 1e-2\n"));
    let out = run.exec(&["decay"]);
    assert_eq!(code(&out), 2);
    assert_eq!(stderr_record(&out)["label"], "beyond_wrap_horizon");
}

#[test]
fn large_data_picard_is_a_numerical_failure() {
    let run = Run::new(&format!("{BASE}\n[data]\namplitude = 40.0\n\n[picard]\nT = 0.08\nn_t = 9\n"));
    let out = run.exec(&["picard"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    let label = stderr_record(&out)["label"].as_str().unwrap().to_string();
    assert!(label == "left_ball" || label == "non_contraction", "{label}");
}
