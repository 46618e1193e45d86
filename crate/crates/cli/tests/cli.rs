use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn ni_irc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ni-irc"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(dir: &Path, name: &str, contents: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, contents).unwrap();
    path
}

fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn scalar(v: &Value) -> f64 {
    v[0][0].as_f64().unwrap()
}

fn scalar_plant(dir: &Path, name: &str, c: f64) -> PathBuf {
    write(
        dir,
        name,
        &format!(r#"{{"n":1,"p":1,"A":[[0.5]],"B":[[1.0]],"C":[[{c}]]}}"#),
    )
}

#[test]
fn design_from_literal_dc_gain() {
    let tmp = TempDir::new().unwrap();
    let out = ni_irc(&["design", "--g1", "[[1]]", "--out", "o"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let params = read_json(tmp.path().join("o/params.json"));
    assert_eq!(scalar(&params["D"]), -3.0);
    let gamma = scalar(&params["Gamma"]);
    assert!(gamma > 0.0 && gamma < 2.0 / 3.0, "Gamma = {gamma}");
}

#[test]
fn design_rejects_indefinite_dc_gain() {
    let tmp = TempDir::new().unwrap();
    let out = ni_irc(&["design", "--g1", "[[-1]]", "--out", "o"], tmp.path());
    assert_ne!(code(&out), 0);
    assert!(stderr(&out).contains("G(1) must be positive definite"), "{}", stderr(&out));
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn design_from_plant_file_matches_literal() {
    let tmp = TempDir::new().unwrap();
    let plant = scalar_plant(tmp.path(), "plant.json", 0.25);
    // G(1) = 0.25 / 0.5 = 0.5 → δ = 1, D = −1.5
    let out = ni_irc(&["design", "--model", plant.to_str().unwrap(), "--out", "o"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("D < -G(1)"));
    let params = read_json(tmp.path().join("o/params.json"));
    assert!((scalar(&params["D"]) + 1.5).abs() < 1e-12);
}

#[test]
fn verify_ni_accepts_exact_certificate() {
    let tmp = TempDir::new().unwrap();
    scalar_plant(tmp.path(), "plant.json", 0.5);
    write(tmp.path(), "p.json", r#"{"P": [[0.25]]}"#);
    let out = ni_irc(&["verify-ni", "--model", "plant.json", "--cert", "p.json"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let cert = read_json(tmp.path().join("ni_certificate.json"));
    assert_eq!(scalar(&cert["P"]), 0.25);
}

#[test]
fn verify_ni_rejects_equality_violation() {
    let tmp = TempDir::new().unwrap();
    scalar_plant(tmp.path(), "plant.json", 1.0);
    write(tmp.path(), "p.json", "[[1.0]]");
    let out = ni_irc(&["verify-ni", "--model", "plant.json", "--cert", "p.json"], tmp.path());
    assert_eq!(code(&out), 2);
    assert!(stdout(&out).contains("equality residual = 1.000e0"), "{}", stdout(&out));
    assert!(!tmp.path().join("ni_certificate.json").exists());
}

#[test]
fn verify_ni_search_finds_and_stalls() {
    let tmp = TempDir::new().unwrap();
    scalar_plant(tmp.path(), "good.json", 0.5);
    scalar_plant(tmp.path(), "neg.json", -1.0);
    let out = ni_irc(&["verify-ni", "--model", "good.json", "--out", "g"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let p = scalar(&read_json(tmp.path().join("g/ni_certificate.json"))["P"]);
    assert!((p - 0.25).abs() < 1e-9);

    let out = ni_irc(&["verify-ni", "--model", "neg.json", "--out", "n"], tmp.path());
    assert_eq!(code(&out), 2);
    assert!(stdout(&out).contains("not a proof"));
}

#[test]
fn verify_cl_accepts_and_rejects() {
    let tmp = TempDir::new().unwrap();
    scalar_plant(tmp.path(), "plant.json", 0.5);
    write(tmp.path(), "irc.json", r#"{"Gamma": [[0.01]], "D": [[-3]]}"#);
    write(tmp.path(), "weak.json", r#"{"Gamma": [[0.01]], "D": [[-0.5]]}"#);

    let out = ni_irc(&["verify-cl", "--model", "plant.json", "--params", "irc.json", "--out", "a"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("certified asymptotically stable"));
    let cl = read_json(tmp.path().join("a/closed_loop_certificate.json"));
    assert_eq!(cl["accepted"], Value::Bool(true));
    assert!((cl["spectral_radius"].as_f64().unwrap() - 0.980206).abs() < 1e-4);

    let out = ni_irc(&["verify-cl", "--model", "plant.json", "--params", "weak.json", "--out", "r"], tmp.path());
    assert_eq!(code(&out), 2);
    let table = stdout(&out);
    let row = table.lines().find(|l| l.starts_with("D < -G(1)")).unwrap();
    assert!(row.contains("-5.000000e-1") && row.contains("VIOLATED"), "{row}");
}

#[test]
fn verify_cl_rejects_admissibility_boundary() {
    let tmp = TempDir::new().unwrap();
    scalar_plant(tmp.path(), "plant.json", 0.5);
    // −2Γ⁻¹ = −3 = D
    write(tmp.path(), "edge.json", r#"{"Gamma": [[0.6666666666666666]], "D": [[-3]]}"#);
    let out = ni_irc(&["verify-cl", "--model", "plant.json", "--params", "edge.json"], tmp.path());
    assert_eq!(code(&out), 2, "{}", stdout(&out));
}

#[test]
fn simulate_and_frf_write_csv() {
    let tmp = TempDir::new().unwrap();
    scalar_plant(tmp.path(), "plant.json", 0.5);
    write(tmp.path(), "irc.json", r#"{"Gamma": [[0.01]], "D": [[-3]]}"#);
    let out = ni_irc(
        &["simulate", "--model", "plant.json", "--params", "irc.json", "--steps", "3000", "--out", "s"],
        tmp.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let closed = fs::read_to_string(tmp.path().join("s/step_closed.csv")).unwrap();
    assert_eq!(closed.lines().next(), Some("k,t,u0,y0"));
    let last: f64 = closed.lines().last().unwrap().rsplit(',').next().unwrap().parse().unwrap();
    // G(1)/(1 + G(1)·(−D)⁻¹·…) collapses to −D·G(1)/(−D − G(1)) = 1.5
    assert!((last - 1.5).abs() < 1e-6, "{last}");

    let out = ni_irc(&["frf", "--model", "plant.json", "--ts", "1e-3", "--band", "1,400", "--out", "f"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let frf = fs::read_to_string(tmp.path().join("f/frf_open.csv")).unwrap();
    assert_eq!(frf.lines().next(), Some("freq_hz,re,im,mag_db,phase_deg"));
    assert!(!tmp.path().join("f/frf_closed.csv").exists());
}

#[test]
fn demo_runs_end_to_end() {
    let tmp = TempDir::new().unwrap();
    let out = ni_irc(&["demo", "--out", "demo"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("published 14.4 dB"));
    let dir = tmp.path().join("demo");
    for f in [
        "plant.json",
        "params.json",
        "ni_certificate.json",
        "closed_loop_certificate.json",
        "frf_open.csv",
        "frf_closed.csv",
        "step_open.csv",
        "step_closed.csv",
        "summary.json",
    ] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    let summary = read_json(dir.join("summary.json"));
    assert_eq!(summary["certified"], Value::Bool(true));
    assert!((summary["margin_d_below_minus_dc_gain"].as_f64().unwrap() - 2.0).abs() < 1e-9, "{summary}");

    let staged: Vec<_> = fs::read_dir(&dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().ends_with(".partial"))
        .collect();
    assert!(staged.is_empty());
}

#[test]
fn demo_plant_feeds_design_and_report() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&ni_irc(&["demo", "--out", "demo", "--steps", "10"], tmp.path())), 0);
    let out = ni_irc(&["design", "--model", "demo/plant.json", "--out", "d"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let d = scalar(&read_json(tmp.path().join("d/params.json"))["D"]);
    assert!((d + 3.0).abs() < 1e-6, "D = {d}");

    let out = ni_irc(
        &[
            "report", "--model", "demo/plant.json", "--params", "demo/params.json",
            "--band", "10000,20000", "--gammas", "0.001,0.01,1", "--out", "r",
        ],
        tmp.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let sweep = read_json(tmp.path().join("r/gamma_sweep.json"));
    let entries = sweep.as_array().unwrap();
    assert_eq!(entries.len(), 3);
    assert_eq!(entries[2]["admissible"], Value::Bool(false));
}

#[test]
fn missing_plant_fails_cleanly() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "irc.json", r#"{"Gamma": [[0.01]], "D": [[-3]]}"#);
    let out = ni_irc(
        &["simulate", "--model", "gone.json", "--params", "irc.json", "--out", "s"],
        tmp.path(),
    );
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("gone.json"));
    assert!(!tmp.path().join("s").exists());
}

#[test]
fn malformed_inputs_are_format_errors() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "broken.json", "{\"n\": 1,");
    let out = ni_irc(&["verify-ni", "--model", "broken.json"], tmp.path());
    assert_eq!(code(&out), 3);
    let out = ni_irc(&["design", "--g1", "one"], tmp.path());
    assert_eq!(code(&out), 3);
    let out = ni_irc(&["frf", "--modal", "m.json"], tmp.path());
    assert_eq!(code(&out), 3);
}

#[test]
fn config_file_supplies_flags() {
    let tmp = TempDir::new().unwrap();
    fs::create_dir(tmp.path().join("cfg")).unwrap();
    scalar_plant(&tmp.path().join("cfg"), "plant.json", 0.5);
    write(
        &tmp.path().join("cfg"),
        "run.json",
        r#"{"model": "plant.json", "delta": 4, "out": "results"}"#,
    );
    let out = ni_irc(&["design", "--config", "cfg/run.json", "--delta", "2"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    // command line δ = 2 wins over the file's 4: D = −(G(1) + δ) = −3
    let d = scalar(&read_json(tmp.path().join("cfg/results/params.json"))["D"]);
    assert!((d + 3.0).abs() < 1e-12);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let tmp = TempDir::new().unwrap();
    for dir in ["a", "b"] {
        assert_eq!(code(&ni_irc(&["demo", "--out", dir, "--steps", "2000"], tmp.path())), 0);
    }
    for entry in fs::read_dir(tmp.path().join("a")).unwrap() {
        let name = entry.unwrap().file_name();
        let a = fs::read(tmp.path().join("a").join(&name)).unwrap();
        let b = fs::read(tmp.path().join("b").join(&name)).unwrap();
        assert!(a == b, "{name:?} differs");
    }
}

#[test]
fn help_documents_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let out = ni_irc(&["--help"], tmp.path());
    let text = stdout(&out);
    for line in ["0  success", "2  certification rejected", "3  input or format error", "4  numerical failure"] {
        assert!(text.contains(line), "{text}");
    }
}

#[test]
fn overflow_is_a_numerical_failure() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "huge.json", r#"{"n":1,"p":1,"A":[[1e308]],"B":[[1e308]],"C":[[1e308]]}"#);
    for args in [
        &["verify-ni", "--model", "huge.json"][..],
        &["design", "--model", "huge.json"][..],
        &["simulate", "--model", "huge.json", "--steps", "5", "--out", "s"][..],
        &["frf", "--model", "huge.json", "--ts", "1", "--band", "0.01,0.4", "--out", "f"][..],
    ] {
        let out = ni_irc(args, tmp.path());
        assert_eq!(code(&out), 4, "{args:?}: {}", stderr(&out));
        assert!(stderr(&out).contains("numerical failure"));
    }
    assert!(!tmp.path().join("s").exists() && !tmp.path().join("f").exists());
}
