use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_weakdirect"));
    cmd.env_remove("WEAKDIRECT_OUT_DIR");
    cmd
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn assert_success(out: &Output) {
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), stderr(out));
}

type Row = BTreeMap<String, String>;

fn read_rows(path: &Path) -> Vec<Row> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.deserialize().map(|row| row.unwrap()).collect()
}

fn num(row: &Row, key: &str) -> f64 {
    row[key].parse().unwrap_or_else(|_| panic!("{key} = {:?}", row[key]))
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn run_scenario(tmp: &TempDir, config: &str, extra: &[&str]) -> PathBuf {
    let cfg = write_config(tmp.path(), "scenario.toml", config);
    let out_dir = tmp.path().join("out");
    let mut args = vec!["--out-dir", out_dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    args.extend_from_slice(&["run", cfg.to_str().unwrap()]);
    assert_success(&run(&args));
    out_dir
}

const MIXED_QUBIT_DENSITY: &str = r#"
[state]
kind = "preset"
name = "mixed-qubit"

[protocol]
kind = "density"
sweep = [0.08, 0.04, 0.02, 0.01]
"#;

const PLUS_I: &str = r#"
[state]
kind = "preset"
name = "plus-i"

[protocol]
kind = "wavefunction"
sweep = [0.08, 0.04, 0.02, 0.01]
"#;

const SAMPLED_DIRAC: &str = r#"
[state]
kind = "random"
dim = 3
seed = 7

[protocol]
kind = "dirac"
sweep = [0.4, 0.2]

[pointer]
points = 128

[sampling]
shots = 4000
seed = 11
"#;

#[test]
fn mixed_qubit_density_errors_shrink_with_coupling() {
    let tmp = TempDir::new().unwrap();
    let out = run_scenario(&tmp, MIXED_QUBIT_DENSITY, &[]);
    let rows = read_rows(&out.join("estimates.csv"));
    assert_eq!(rows.len(), 16);
    let mut by_setting: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for row in &rows {
        assert_eq!(row["scheme"], "substitution");
        by_setting.entry(row["setting"].clone()).or_default().push((num(row, "gt"), num(row, "abs_error")));
    }
    assert_eq!(by_setting.len(), 4);
    for (setting, mut points) in by_setting {
        points.sort_by(|a, b| b.0.total_cmp(&a.0));
        assert!(points.windows(2).all(|w| w[1].1 < w[0].1), "{setting}: {points:?}");
    }
    let recon = read_json(&out.join("reconstructed.json"));
    let last = recon["sweep"].as_array().unwrap().last().unwrap();
    assert!(last["distance"].as_f64().unwrap() < 1e-4);
    assert!(last["min_eigenvalue"].as_f64().unwrap() > 0.0);
}

#[test]
fn plus_i_wavefunction_recovers_amplitudes() {
    let tmp = TempDir::new().unwrap();
    let out = run_scenario(&tmp, PLUS_I, &[]);
    let recon = read_json(&out.join("reconstructed.json"));
    assert_eq!(recon["protocol"], "wavefunction");
    let last = recon["sweep"].as_array().unwrap().last().unwrap();
    let amps = &last["normalized"][0];
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let expected = [[h, 0.0], [0.0, h]];
    for (a, e) in amps.as_array().unwrap().iter().zip(expected) {
        assert!((a[0].as_f64().unwrap() - e[0]).abs() < 1e-4, "{amps}");
        assert!((a[1].as_f64().unwrap() - e[1]).abs() < 1e-4, "{amps}");
    }
}

#[test]
fn rank_above_dimension_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bad.toml",
        "[state]\nkind = \"random\"\ndim = 3\nseed = 1\nrank = 5\n\n[protocol]\nkind = \"dirac\"\n",
    );
    let out = run(&["--out-dir", tmp.path().join("o").to_str().unwrap(), "run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("state.rank"), "{}", stderr(&out));
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn unknown_field_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", "[state]\nkind = \"preset\"\nname = \"plus-i\"\n\n[protocol]\nkind = \"dirac\"\nshceme = \"scheme1\"\n");
    let out = run(&["--out-dir", tmp.path().to_str().unwrap(), "run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("shceme"), "{}", stderr(&out));
}

#[test]
fn scheme2_density_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let text = MIXED_QUBIT_DENSITY.replace("kind = \"density\"", "kind = \"density\"\nscheme = \"scheme2\"");
    let cfg = write_config(tmp.path(), "bad.toml", &text);
    let out = run(&["--out-dir", tmp.path().to_str().unwrap(), "run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("protocol.scheme"), "{}", stderr(&out));
}

#[test]
fn missing_config_is_an_io_error() {
    let tmp = TempDir::new().unwrap();
    let out = run(&["--out-dir", tmp.path().to_str().unwrap(), "run", tmp.path().join("absent.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn report_extrapolates_pure_state_distance() {
    let tmp = TempDir::new().unwrap();
    let text = "[state]\nkind = \"preset\"\nname = \"plus-i\"\n\n[protocol]\nkind = \"density\"\n";
    let out = run_scenario(&tmp, text, &[]);
    assert_success(&run(&["report", out.to_str().unwrap()]));
    let rows = read_rows(&out.join("convergence.csv"));
    let state = rows.iter().find(|r| r["setting"] == "state").expect("state row");
    assert!(num(state, "extrapolated_error") <= 1e-4, "{state:?}");
    assert!(num(state, "smallest_gt_error") < 1e-2);
    for row in rows.iter().filter(|r| r["setting"] != "state") {
        assert_eq!(row["monotone"], "true", "{row:?}");
    }
    let sweep = read_rows(&out.join("sweep.csv"));
    assert_eq!(sweep.len(), 4);
    for row in &sweep {
        assert!((num(row, "log10_gt") - num(row, "gt").log10()).abs() < 1e-15);
    }
}

#[test]
fn report_needs_two_couplings() {
    let tmp = TempDir::new().unwrap();
    let text = PLUS_I.replace("sweep = [0.08, 0.04, 0.02, 0.01]", "sweep = [0.02]");
    let out = run_scenario(&tmp, &text, &[]);
    let rep = run(&["report", out.to_str().unwrap()]);
    assert_eq!(rep.status.code(), Some(3));
    assert!(stderr(&rep).contains("at least two"), "{}", stderr(&rep));
}

#[test]
fn report_on_missing_directory_is_an_io_error() {
    let tmp = TempDir::new().unwrap();
    let rep = run(&["report", tmp.path().join("nothing").to_str().unwrap()]);
    assert_eq!(rep.status.code(), Some(4));
}

#[test]
fn reconstructed_matrices_match_estimates_exactly() {
    let tmp = TempDir::new().unwrap();
    let text = "[state]\nkind = \"random\"\ndim = 3\nseed = 5\n\n[protocol]\nkind = \"dirac\"\nsweep = [0.04, 0.02]\n";
    let out = run_scenario(&tmp, text, &[]);
    let rows = read_rows(&out.join("estimates.csv"));
    let recon = read_json(&out.join("reconstructed.json"));
    for entry in recon["sweep"].as_array().unwrap() {
        let gt = entry["gt"].as_f64().unwrap();
        for row in rows.iter().filter(|r| num(r, "gt") == gt) {
            let (a, b) = row["setting"].split_once(';').unwrap();
            let a: usize = a.trim_start_matches("a=").parse().unwrap();
            let b: usize = b.trim_start_matches("b=").parse().unwrap();
            let cell = &entry["raw"][a][b];
            assert_eq!(cell[0].as_f64().unwrap(), num(row, "re"));
            assert_eq!(cell[1].as_f64().unwrap(), num(row, "im"));
        }
    }
    let manifest = read_json(&out.join("manifest.json"));
    let text_state = serde_json::to_string(&manifest["state"]).unwrap();
    let back: Value = serde_json::from_str(&text_state).unwrap();
    assert_eq!(back, manifest["state"]);
}

#[test]
fn manifest_records_the_run() {
    let tmp = TempDir::new().unwrap();
    let out = run_scenario(&tmp, SAMPLED_DIRAC, &["--seed", "99", "--threads", "1"]);
    let m = read_json(&out.join("manifest.json"));
    for key in ["tool", "version", "hbar", "config", "dim", "state", "b0", "pointer", "kappa", "calibration", "sampling", "threads", "format"] {
        assert!(m.get(key).is_some(), "missing {key}");
    }
    assert_eq!(m["hbar"], 1.0);
    assert_eq!(m["dim"], 3);
    assert_eq!(m["threads"], 1);
    assert_eq!(m["sampling"]["seed"], 99);
    assert_eq!(m["sampling"]["shots"], 4000);
    assert_eq!(m["pointer"]["points"], 128);
    assert_eq!(m["kappa"].as_array().unwrap().len(), 2);
    let kappa = m["kappa"][0]["kappa"].as_f64().unwrap();
    assert!((kappa - (2.0f64 / 0.4).powi(2)).abs() < 1e-9);
    assert_eq!(m["b0"]["label"], "fourier:0");
    assert_eq!(m["state"].as_array().unwrap().len(), 3);
    let rows = read_rows(&out.join("estimates.csv"));
    assert!(rows.iter().all(|r| !r["stderr_re"].is_empty() && !r["stderr_im"].is_empty()));
}

#[test]
fn sampled_output_is_independent_of_thread_count() {
    let tmp1 = TempDir::new().unwrap();
    let tmp2 = TempDir::new().unwrap();
    let a = run_scenario(&tmp1, SAMPLED_DIRAC, &["--threads", "1"]);
    let b = run_scenario(&tmp2, SAMPLED_DIRAC, &["--threads", "3"]);
    for file in ["estimates.csv", "reconstructed.json"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn seed_override_changes_samples() {
    let tmp1 = TempDir::new().unwrap();
    let tmp2 = TempDir::new().unwrap();
    let a = run_scenario(&tmp1, SAMPLED_DIRAC, &[]);
    let b = run_scenario(&tmp2, SAMPLED_DIRAC, &["--seed", "12"]);
    assert_ne!(fs::read(a.join("estimates.csv")).unwrap(), fs::read(b.join("estimates.csv")).unwrap());
}

#[test]
fn structured_format_and_env_out_dir() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "s.toml", PLUS_I);
    let out_dir = tmp.path().join("env-out");
    let out = bin()
        .env("WEAKDIRECT_OUT_DIR", &out_dir)
        .args(["--format", "structured", "run", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_success(&out);
    let rows = read_json(&out_dir.join("estimates.json"));
    assert_eq!(rows.as_array().unwrap().len(), 8);
    assert!(!out_dir.join("estimates.csv").exists());
    assert_success(&run(&["report", out_dir.to_str().unwrap()]));
    assert!(out_dir.join("convergence.json").exists());
}

#[test]
fn calibrate_reports_unit_ratio() {
    let tmp = TempDir::new().unwrap();
    let out = run(&["--out-dir", tmp.path().to_str().unwrap(), "calibrate", "--sweep", "0.08,0.04", "--points", "256"]);
    assert_success(&out);
    let cal = read_json(&tmp.path().join("calibration.json"));
    assert!((cal["extrapolated_ratio"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    let bad = run(&["--out-dir", tmp.path().to_str().unwrap(), "calibrate", "--points", "100"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn oracle_prints_exact_values() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "o.toml", PLUS_I);
    let out = run(&["--out-dir", tmp.path().to_str().unwrap(), "oracle", cfg.to_str().unwrap()]);
    assert_success(&out);
    let rows = read_rows(&tmp.path().join("oracle.csv"));
    assert_eq!(rows.len(), 2);
    let a0 = (num(&rows[0], "re"), num(&rows[0], "im"));
    let a1 = (num(&rows[1], "re"), num(&rows[1], "im"));
    // a1 / a0 = i for |+i>.
    let denom = a0.0 * a0.0 + a0.1 * a0.1;
    let q = ((a1.0 * a0.0 + a1.1 * a0.1) / denom, (a1.1 * a0.0 - a1.0 * a0.1) / denom);
    assert!(q.0.abs() < 1e-12 && (q.1 - 1.0).abs() < 1e-12, "{q:?}");
}

#[test]
fn density_with_nonuniform_b0_recovers_the_state() {
    let tmp = TempDir::new().unwrap();
    let text = "[state]\nkind = \"random\"\ndim = 3\nseed = 21\n\n[protocol]\nkind = \"density\"\nb0 = 2\nsweep = [0.04, 0.02]\n";
    let out = run_scenario(&tmp, text, &[]);
    let recon = read_json(&out.join("reconstructed.json"));
    let last = recon["sweep"].as_array().unwrap().last().unwrap();
    assert!(last["distance"].as_f64().unwrap() < 1e-3, "{last}");
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["b0"]["label"], "fourier:2");
}
