use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use selftomo::experiment::{read_csv, ExperimentResult, ResultDocument};

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn selftomo(args: &[&str], env_dir: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_selftomo"));
    cmd.args(args).env_remove("SELFTOMO_OUT_DIR");
    if let Some(dir) = env_dir {
        cmd.env("SELFTOMO_OUT_DIR", dir);
    }
    cmd.output().unwrap()
}

fn config(name: &str) -> String {
    configs().join(name).to_string_lossy().into_owned()
}

#[test]
fn simulate_qubit_to_stdout() {
    let out = selftomo(&["simulate-qubit", "--config", &config("qubit.toml")], None);
    assert!(out.status.success());
    let doc = ResultDocument::from_json(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    let ExperimentResult::QubitSelftomo(q) = doc.result else {
        panic!("wrong result kind")
    };
    assert!(q.reconstruction.unwrap().error.unwrap() < 1e-9);
    assert!(q.oracle_max_deviation.unwrap() < 1e-12);
}

#[test]
fn overrides_are_echoed() {
    let out = selftomo(
        &[
            "simulate-onoff",
            "--config",
            &config("onoff.toml"),
            "--shots",
            "5000",
            "--seed",
            "3",
        ],
        None,
    );
    assert!(out.status.success());
    let doc = ResultDocument::from_json(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert_eq!((doc.config.shots, doc.config.seed), (5000, 3));

    let exact = selftomo(
        &[
            "simulate-onoff",
            "--config",
            &config("onoff.toml"),
            "--exact",
        ],
        None,
    );
    let doc = ResultDocument::from_json(std::str::from_utf8(&exact.stdout).unwrap()).unwrap();
    assert_eq!(doc.config.shots, 0);
    let clash = selftomo(
        &[
            "simulate-onoff",
            "--config",
            &config("onoff.toml"),
            "--exact",
            "--shots",
            "5",
        ],
        None,
    );
    assert_eq!(clash.status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let missing = selftomo(
        &["simulate-qubit", "--config", "/nonexistent/config.toml"],
        None,
    );
    assert_eq!(missing.status.code(), Some(4));

    let wrong_mode = selftomo(&["simulate-qubit", "--config", &config("onoff.toml")], None);
    assert_eq!(wrong_mode.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&wrong_mode.stderr).contains("experiment.mode"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(
        &bad,
        "version = 1\n[experiment]\nmode = \"qubit-selftomo\"\ndetector = [0.9, 0.9, 0.9]\n",
    )
    .unwrap();
    let invalid = selftomo(&["simulate-qubit", "--config", bad.to_str().unwrap()], None);
    assert_eq!(invalid.status.code(), Some(2));

    let unusable = dir.path().join("table.json");
    std::fs::write(
        &unusable,
        r#"{"nbar": 0.0, "table": {"mm": 0.81, "pm": 0.09, "mp": 0.09, "pp": 0.01}}"#,
    )
    .unwrap();
    let pipeline = selftomo(&["fit-onoff", "--data", unusable.to_str().unwrap()], None);
    assert_eq!(pipeline.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&pipeline.stderr).contains("unidentifiable"));

    let usage = selftomo(&["simulate-qubit"], None);
    assert_eq!(usage.status.code(), Some(2));
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = selftomo(
        &[
            "bell-negativity",
            "--config",
            &config("joint-bell.toml"),
            "--csv",
            "neg.csv",
        ],
        Some(dir.path()),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out.stdout.is_empty());
    assert!(dir.path().join("bell-negativity.json").exists());
    let rows = read_csv(std::fs::File::open(dir.path().join("neg.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 16);
    assert!(rows.iter().any(|r| (r.value + 0.25).abs() < 1e-12));

    let named = selftomo(
        &[
            "joint-tomo",
            "--config",
            &config("joint-bell.toml"),
            "--out",
            "sub/j.json",
        ],
        Some(dir.path()),
    );
    assert!(named.status.success());
    assert!(dir.path().join("sub/j.json").exists());
}

#[test]
fn qubit_csv_has_24_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("q.csv");
    let out = selftomo(
        &[
            "simulate-qubit",
            "--config",
            &config("qubit.toml"),
            "--shots",
            "1000",
            "--csv",
            csv.to_str().unwrap(),
        ],
        None,
    );
    assert!(out.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("b,r,a1,a2,value\n"));
    assert_eq!(read_csv(text.as_bytes()).unwrap().len(), 24);
}

#[test]
fn reconstruct_and_fit_from_simulated_documents() {
    let dir = tempfile::tempdir().unwrap();
    let q = dir.path().join("q.json");
    for shots in ["0", "200000"] {
        let sim = selftomo(
            &[
                "simulate-qubit",
                "--config",
                &config("qubit.toml"),
                "--shots",
                shots,
                "--out",
                q.to_str().unwrap(),
            ],
            None,
        );
        assert!(sim.status.success());
        let rec = selftomo(&["reconstruct-qubit", "--data", q.to_str().unwrap()], None);
        assert!(
            rec.status.success(),
            "{}",
            String::from_utf8_lossy(&rec.stderr)
        );
        let v: serde_json::Value = serde_json::from_slice(&rec.stdout).unwrap();
        let est: Vec<f64> =
            serde_json::from_value(v["result"]["report"]["estimate"].clone()).unwrap();
        let sign = est[2].signum();
        assert!((sign * est[0] - 0.3).abs() < 0.02 && (sign * est[1] + 0.4).abs() < 0.02);
    }

    let o = dir.path().join("o.json");
    let sim = selftomo(
        &[
            "simulate-onoff",
            "--config",
            &config("onoff.toml"),
            "--shots",
            "1000000",
            "--out",
            o.to_str().unwrap(),
        ],
        None,
    );
    assert!(sim.status.success());
    let fit = selftomo(&["fit-onoff", "--data", o.to_str().unwrap()], None);
    assert!(fit.status.success());
    let v: serde_json::Value = serde_json::from_slice(&fit.stdout).unwrap();
    let eta = v["result"]["fit"]["params"]["eta"].as_f64().unwrap();
    let sigma = v["result"]["fit"]["statistical_sigma"][0].as_f64().unwrap();
    assert!((eta - 0.6).abs() < 5.0 * sigma);
}

#[test]
fn fit_from_toml_counts_with_nbar_flag() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("clicks.toml");
    std::fs::write(&data, "counts = [532663, 86087, 86087, 295163]\n").unwrap();
    let missing = selftomo(&["fit-onoff", "--data", data.to_str().unwrap()], None);
    assert_eq!(missing.status.code(), Some(2));
    let fit = selftomo(
        &["fit-onoff", "--data", data.to_str().unwrap(), "--nbar", "2"],
        None,
    );
    assert!(fit.status.success());
    let v: serde_json::Value = serde_json::from_slice(&fit.stdout).unwrap();
    assert!((v["result"]["fit"]["params"]["eta"].as_f64().unwrap() - 0.6).abs() < 1e-3);
}

#[test]
fn malformed_data_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("broken.json");
    std::fs::write(&data, "{\"tables\": [").unwrap();
    let out = selftomo(
        &["reconstruct-qubit", "--data", data.to_str().unwrap()],
        None,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}
