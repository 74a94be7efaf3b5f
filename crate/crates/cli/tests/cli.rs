use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hybridlink"))
}

fn fig4() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/fig4.toml")
}

fn fig4_text() -> String {
    fs::read_to_string(fig4()).unwrap()
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    bin()
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out-dir")
        .arg(out)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("scenario.toml");
    fs::write(&p, text).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn summary(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

fn csv_column(path: &Path, name: &str) -> Vec<f64> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|row| row.unwrap()[idx].parse().unwrap()).collect()
}

#[test]
fn fig4_simulation_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--no-metadata"], &fig4(), tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let s = summary(tmp.path());
    for k in ["re_overlap", "arg_overlap", "p1_yb", "p1_in", "c1", "fidelity", "p_succ", "rate_khz"] {
        assert!(s[k].is_number(), "missing {k}");
    }
    assert!(s["re_overlap"].as_f64().unwrap() >= 0.98);
    assert!((s["fidelity"].as_f64().unwrap() - 0.94).abs() < 0.005);
    assert!(s.get("metadata").is_none());
    for f in ["donor_trajectory.csv", "ion_trajectory.csv", "donor_photon.csv", "ion_photon.csv", "overlap.csv"] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
    // full double precision
    let line = fs::read_to_string(tmp.path().join("ion_photon.csv")).unwrap().lines().nth(5).unwrap().to_string();
    let first = line.split(',').next().unwrap();
    assert_eq!(first.split('e').next().unwrap().replace(['-', '.'], "").len(), 17, "{first}");
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run(&["simulate", "--no-metadata"], &fig4(), a.path()).status.success());
    assert!(run(&["simulate", "--no-metadata"], &fig4(), b.path()).status.success());
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 6);
    for n in names {
        assert_eq!(fs::read(a.path().join(&n)).unwrap(), fs::read(b.path().join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn metadata_is_optional() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["protocol"], &fig4(), tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let s = summary(tmp.path());
    assert!(s["metadata"]["generator"].as_str().unwrap().starts_with("hybridlink"));
    let report: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("protocol.json")).unwrap()).unwrap();
    for k in ["c1", "fidelity", "p_succ", "rate_khz", "balance_residual"] {
        assert!(report[k].is_number(), "{k}");
    }
    let re = report["rho"]["re"].as_array().unwrap();
    let trace: f64 = (0..4).map(|i| re[i][i].as_f64().unwrap()).sum();
    assert!((trace - 1.0).abs() < 1e-12);
}

#[test]
fn silent_emitters_are_a_numerical_error() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fig4_text()
        .replace("omega_max = \"2.9 GHz\"", "omega_max = 0")
        .replace("omega_max = \"8.1 MHz\"", "omega_max = 0");
    let cfg = write_config(tmp.path(), &text);
    let o = run(&["simulate"], &cfg, tmp.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("no photon emitted"), "{}", stderr(&o));
    assert!(stderr(&o).contains("stage"));
}

#[test]
fn weak_excitation_bound_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &fig4_text().replace("p1_in = 0.05", "p1_in = 1.0"));
    let o = run(&["simulate"], &cfg, tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(msg.contains("protocol.p1_in") && msg.contains("weak-excitation"), "{msg}");
}

#[test]
fn config_errors_name_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &fig4_text().replace("kappa = \"60 GHz\"", "kappa = \"60 furlongs\""));
    let o = run(&["simulate"], &cfg, tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("donor.kappa"), "{}", stderr(&o));

    let cfg = write_config(tmp.path(), &format!("{}\n[grid]\nstep = 1\n", fig4_text()));
    let o = run(&["simulate"], &cfg, tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("grid.step"), "{}", stderr(&o));
}

#[test]
fn effective_config_is_resolved_and_reparses() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["protocol", "--print-effective-config", "--no-metadata"], &fig4(), tmp.path());
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let table: toml::Table = text.parse().unwrap();
    let delta = table["donor"]["delta"].as_float().unwrap();
    assert!((delta - 2.0 * std::f64::consts::PI * 200.0).abs() < 1e-9);
    let again = write_config(tmp.path(), &text);
    let o2 = run(&["protocol", "--print-effective-config", "--no-metadata"], &again, tmp.path());
    assert_eq!(String::from_utf8(o2.stdout).unwrap(), text);
}

#[test]
fn p1_sweep_trades_fidelity_for_success() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["sweep", "--param", "p1", "--lo", "0.01", "--hi", "0.10", "--steps", "10"], &fig4(), tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let path = tmp.path().join("sweep.csv");
    let p1 = csv_column(&path, "p1");
    let f = csv_column(&path, "fidelity");
    let ps = csv_column(&path, "p_succ");
    assert_eq!(p1.len(), 10);
    assert!(p1.windows(2).all(|w| w[1] > w[0]));
    assert!(f.windows(2).all(|w| w[1] < w[0]));
    assert!(ps.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn eta_sweep_rate_follows_cycle_model() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["sweep", "--param", "protocol.eta", "--lo", "0", "--hi", "1", "--steps", "5"], &fig4(), tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let path = tmp.path().join("sweep.csv");
    let eta = csv_column(&path, "protocol.eta");
    let ps = csv_column(&path, "p_succ");
    let rate = csv_column(&path, "rate_khz");
    assert_eq!(rate[0], 0.0);
    for k in 1..eta.len() {
        // P_succ is linear in η; the rate only through the readout-amortized cycle
        assert!((ps[k] / eta[k] - ps[4]).abs() < 1e-12);
        let expected = 1000.0 * ps[k] / (1.0 + 0.01 + ps[k] * 10.0);
        assert!((rate[k] - expected).abs() < 1e-9);
    }
}

#[test]
fn bad_sweeps_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["sweep", "--param", "p1", "--lo", "0.01", "--hi", "0.1", "--steps", "0"], &fig4(), tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["sweep", "--param", "donor.colour", "--lo", "0", "--hi", "1", "--steps", "2"], &fig4(), tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("donor.colour"));
}

#[test]
fn dynamic_sweep_is_independent_of_jobs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["sweep", "--param", "ion.pulse.tau", "--lo", "26", "--hi", "30", "--steps", "4"];
    let mut one = args.to_vec();
    one.extend(["--jobs", "1"]);
    let mut four = args.to_vec();
    four.extend(["--jobs", "4"]);
    assert!(run(&one, &fig4(), a.path()).status.success());
    assert!(run(&four, &fig4(), b.path()).status.success());
    let x = fs::read(a.path().join("sweep.csv")).unwrap();
    assert_eq!(x, fs::read(b.path().join("sweep.csv")).unwrap());
    let tau = csv_column(&a.path().join("sweep.csv"), "ion.pulse.tau");
    assert_eq!(tau.len(), 4);
    assert!(tau.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn cavity_map_writes_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["cavity-map"], &fig4(), tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let c = csv_column(&tmp.path().join("cavity_map.csv"), "c");
    assert_eq!(c.len(), 100 * 100);
    let s: Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("cavity_summary.json")).unwrap()).unwrap();
    assert_eq!(s["operating_point"]["bad_cavity"], Value::Bool(true));
}

#[test]
fn short_optimization_writes_log_and_improves() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fig4_text().replace("max_evaluations = 400", "max_evaluations = 12");
    let cfg = write_config(tmp.path(), &text);
    let o = run(&["optimize", "--no-metadata", "--seed", "5"], &cfg, tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let log = tmp.path().join("optimizer_log.csv");
    let best = csv_column(&log, "best");
    assert!(!best.is_empty() && best.len() <= 12);
    assert!(best.windows(2).all(|w| w[1] >= w[0]));
    let p1 = csv_column(&log, "p1");
    assert!(p1.iter().all(|p| (p - 0.05).abs() <= 1e-4));
    let s = summary(tmp.path());
    assert!(s["arg_overlap"].as_f64().unwrap().abs() < 1e-6);
    assert!((s["p_emit_in"].as_f64().unwrap() - 0.05).abs() <= 1e-4);
}

#[test]
fn missing_config_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["simulate"], &tmp.path().join("nope.toml"), tmp.path());
    assert_eq!(o.status.code(), Some(2));
}
