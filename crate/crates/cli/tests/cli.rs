//! End-to-end runs of the `dicke` binary in scratch directories.

use std::path::Path;
use std::process::{Command, Output};

fn dicke(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dicke"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let body = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    (header, body)
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dicke(tmp.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));

    let o = dicke(tmp.path(), &["spectrum", "--n-atoms", "7", "--n-trc", "10", "--lambda", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("n_atoms"));

    let o = dicke(tmp.path(), &["poincare", "--energy", "-0.4"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("lambda"));

    std::fs::write(tmp.path().join("bad.toml"), "n_atom = 10\n").unwrap();
    let o = dicke(tmp.path(), &["spectrum", "--config", "bad.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("n_atom"));
}

#[test]
fn version_is_machine_readable() {
    let o = dicke(Path::new("."), &["--version"]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), format!("dicke {}", env!("CARGO_PKG_VERSION")));
}

#[test]
fn spectrum_run_is_cached_and_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["spectrum", "--n-atoms", "10", "--n-trc", "40", "--lambda", "0.6", "--energy", "-0.4"];
    let first = dicke(tmp.path(), &[&args[..], &["--out", "a"]].concat());
    assert!(first.status.success(), "{}", stderr(&first));
    assert!(!stderr(&first).contains("cache hit"));
    let second = dicke(tmp.path(), &[&args[..], &["--out", "b"]].concat());
    assert!(second.status.success());
    assert!(stderr(&second).contains("cache hit: spectrum"));

    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for f in ["eigenvalues.csv", "eigvecs.bin", "eigvec_columns.csv", "convergence.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let (header, body) = rows(&a.join("eigenvalues.csv"));
    assert_eq!(header, ["n", "E", "epsilon"]);
    // (N/2 + 1)(n_trc + 1) − n_trc/2
    assert_eq!(body.len(), 6 * 41 - 20);
    let m = manifest(&a);
    assert_eq!(m["params"]["n_atoms"], 10);
    assert_eq!(m["outputs"].as_array().unwrap().len(), 4);
    let (_, cols) = rows(&a.join("eigvec_columns.csv"));
    let blob = std::fs::read(a.join("eigvecs.bin")).unwrap();
    assert_eq!(blob.len(), 8 * body.len() * cols.len());
}

#[test]
fn config_file_and_flags_combine() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("run.toml"), "n_atoms = 8\nn_trc = 20\nlambda = 0.2\n").unwrap();
    let o = dicke(tmp.path(), &["spectrum", "-c", "run.toml", "--lambda", "0.4", "--out", "r", "--no-cache"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = manifest(&tmp.path().join("r"));
    assert_eq!(m["params"]["lambda"], 0.4);
    assert_eq!(m["params"]["n_trc"], 20);
    assert!(m["input_hashes"]["config"].is_string());
    assert!(!tmp.path().join(".dicke-cache").exists());
}

#[test]
fn paper_scale_spectrum_has_9181_levels() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dicke(tmp.path(), &["spectrum", "--n-atoms", "60", "--n-trc", "300", "--lambda", "1", "--out", "s"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(rows(&tmp.path().join("s/eigenvalues.csv")).1.len(), 9181);
}

#[test]
fn ratio_outputs_follow_the_schemas() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dicke(
        tmp.path(),
        &["ratio", "--n-atoms", "20", "--n-trc", "160", "--lambda", "1", "--window-size", "50", "--out", "r"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let d = tmp.path().join("r");
    assert_eq!(rows(&d.join("ratios.csv")).0, ["n", "r"]);
    let (h, bins) = rows(&d.join("histogram.csv"));
    assert_eq!(h, ["bin_lo", "bin_hi", "density"]);
    assert_eq!(bins.len(), 25);
    let (h, scan) = rows(&d.join("scan.csv"));
    assert_eq!(h, ["mean_epsilon", "rescaled_mean_r"]);
    assert!(!scan.is_empty());
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("ratio_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["closer_to"], "GOE");

    let o = dicke(tmp.path(), &["ratio", "--n-atoms", "20", "--n-trc", "20", "--lambda", "1", "--out", "u"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("n_trc"));
}

#[test]
fn classical_outputs_follow_the_schemas() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dicke(
        tmp.path(),
        &["poincare", "--lambda", "0.5", "--energy", "-0.4", "--seeds", "3", "--crossings", "10", "--out", "p"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let (h, pts) = rows(&tmp.path().join("p/sections.csv"));
    assert_eq!(h, ["seed_id", "crossing_idx", "q2", "p2"]);
    assert!(!pts.is_empty());

    let o = dicke(
        tmp.path(),
        &["lyapunov", "--lambda", "0.8", "--energy", "-0.4", "--lambdas", "0.1", "--grid", "8", "--t-end", "300", "--out", "l"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let (h, field) = rows(&tmp.path().join("l/lyapunov_lambda0.8_E-0.4.csv"));
    assert_eq!(h, ["r_idx", "theta_idx", "q2", "p2", "lambda_max", "accessible"]);
    assert_eq!(field.len(), 64);
    assert!(field.iter().any(|r| r[5] == "0" && r[4] == "nan"));
    let (h, table) = rows(&tmp.path().join("l/averaged.csv"));
    assert_eq!(h, ["lambda", "energy", "avg_lyapunov"]);
    let avg: Vec<f64> = table.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(avg[0] > avg[1], "{avg:?}");
}

#[test]
fn husimi_writes_one_normalised_field_per_window_state() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dicke(
        tmp.path(),
        &["husimi", "--n-atoms", "10", "--n-trc", "40", "--lambda", "0.6", "--energy", "-0.4", "--delta-e", "0.1", "--grid", "12", "--out", "h"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let d = tmp.path().join("h");
    let (_, states) = rows(&d.join("husimi_states.csv"));
    assert!(states.len() >= 3);
    for s in &states {
        let (h, cells) = rows(&d.join(&s[2]));
        assert_eq!(h, ["r_idx", "theta_idx", "q2", "p2", "Q", "accessible"]);
        let acc: Vec<f64> = cells.iter().filter(|r| r[5] == "1").map(|r| r[4].parse().unwrap()).collect();
        assert!(acc.iter().all(|q| *q >= 0.0));
        assert!((acc.iter().sum::<f64>() / acc.len() as f64 - 1.0).abs() < 1e-9);
    }
    let o = dicke(
        tmp.path(),
        &["husimi", "--n-atoms", "10", "--n-trc", "40", "--lambda", "0.6", "--energy", "-0.4", "--states", "0", "--out", "x"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("states"));
}

#[test]
fn scan_reuses_cached_work_and_fits() {
    let tmp = tempfile::tempdir().unwrap();
    let args = [
        "scan", "--ensembles", "8:12:4,16:20:4,24:28:4", "--lambda", "0.5", "--energy", "-0.4", "--grid", "16",
        "--n-trc-per-atom", "3", "--mc-sweep", "0.6:0.9:0.1",
    ];
    let o = dicke(tmp.path(), &[&args[..], &["--out", "a"]].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    let d = tmp.path().join("a");
    let (h, table) = rows(&d.join("scan.csv"));
    assert_eq!(h, ["ensemble", "avg_N", "avg_Rm", "Mc"]);
    assert_eq!(table.len(), 3 * 4);
    assert_eq!(rows(&d.join("overlap.csv")).0, ["N", "n", "epsilon", "M"]);
    let fit: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("fit.json")).unwrap()).unwrap();
    for k in ["gamma", "prefactor", "r_squared", "points_used"] {
        assert!(!fit[k].is_null(), "{k}");
    }
    assert_eq!(rows(&d.join("fit_sweep.csv")).1.len(), 4);

    // the overlap stage on one member reuses the scan's spectra and mask
    let o = dicke(
        tmp.path(),
        &["overlap", "--n-atoms", "12", "--lambda", "0.5", "--energy", "-0.4", "--grid", "16", "--n-trc-per-atom", "3", "--out", "o"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let err = stderr(&o);
    assert!(err.contains("cache hit: lyapunov") && err.contains("cache hit: spectrum N=12"), "{err}");
    let overlap_rows = |dir: &str| -> Vec<Vec<String>> {
        rows(&tmp.path().join(dir).join("overlap.csv")).1.into_iter().filter(|r| r[0] == "12").collect()
    };
    assert_eq!(overlap_rows("a"), overlap_rows("o"));

    let o = dicke(tmp.path(), &["rerun", "a", "--out", "b"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(d.join("scan.csv")).unwrap(), std::fs::read(tmp.path().join("b/scan.csv")).unwrap());
}
