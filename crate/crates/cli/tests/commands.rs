use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use tqfi::linalg::HermitianOperator;
use tqfi::states::{self, DensityMatrix, Instance, UnitaryFamily};

fn tqfi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tqfi")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write_instance(dir: &TempDir, name: &str, rho: &DensityMatrix, g: &[[f64; 2]]) -> PathBuf {
    let d = rho.dim();
    let generator = nalgebra::DMatrix::from_fn(d, d, |i, j| {
        let [re, im] = g[i * d + j];
        num_complex::Complex64::new(re, im)
    });
    let family = UnitaryFamily::new(rho.clone(), HermitianOperator::new(generator).unwrap()).unwrap();
    let path = dir.path().join(name);
    Instance::from_family(&family, 0.0).save(&path).unwrap();
    path
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

fn num(field: &str) -> f64 {
    field.parse().unwrap()
}

const Z: [f64; 2] = [0.0, 0.0];
const ONE: [f64; 2] = [1.0, 0.0];

fn kernel_coupling(dir: &TempDir) -> PathBuf {
    let rho = DensityMatrix::diagonal(&[0.7, 0.3, 0.0]).unwrap();
    write_instance(dir, "kernel.json", &rho, &[Z, Z, ONE, Z, Z, Z, ONE, Z, Z])
}

#[test]
fn compute_pure_plus_state() {
    let dir = TempDir::new().unwrap();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let plus =
        DensityMatrix::pure(&[num_complex::Complex64::new(s, 0.0), num_complex::Complex64::new(s, 0.0)]).unwrap();
    let path = write_instance(&dir, "plus.json", &plus, &[[0.5, 0.0], Z, Z, [-0.5, 0.0]]);
    let out = tqfi(&["compute", "--instance", path_str(&path), "--method", "eigenbasis"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!((v["value"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(v["method"], "eigenbasis");
}

#[test]
fn compute_full_rank_qubit_sigma_x() {
    let dir = TempDir::new().unwrap();
    let rho = DensityMatrix::diagonal(&[0.7, 0.3]).unwrap();
    let path = write_instance(&dir, "q.json", &rho, &[Z, ONE, ONE, Z]);
    let out = tqfi(&["compute", "--instance", path_str(&path), "--m", "2"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!((v["value"].as_f64().unwrap() - 0.64).abs() < 1e-12);
    assert_eq!(v["m"], 2);
}

#[test]
fn malformed_instance_exits_2() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{ \"d\": 2, ").unwrap();
    let out = tqfi(&["compute", "--instance", path_str(&path)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn non_hermitian_generator_exits_2() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("nh.json");
    std::fs::write(
        &path,
        r#"{"d":2,"rho":[[[1,0],[0,0]],[[0,0],[0,0]]],"generator":[[[0,0],[1,0]],[[0,0],[0,0]]]}"#,
    )
    .unwrap();
    assert_eq!(tqfi(&["compute", "--instance", path_str(&path)]).status.code(), Some(2));
}

#[test]
fn closed_form_at_rank_exits_3() {
    let dir = TempDir::new().unwrap();
    let path = kernel_coupling(&dir);
    let out = tqfi(&[
        "compute",
        "--instance",
        path_str(&path),
        "--m",
        "2",
        "--method",
        "closed",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("m < rank"));
}

#[test]
fn sweep_m_kernel_coupling_rows() {
    let dir = TempDir::new().unwrap();
    let path = kernel_coupling(&dir);
    let csv = dir.path().join("sweep.csv");
    let out = tqfi(&["sweep-m", "--instance", path_str(&path), "--out", path_str(&csv)]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "m,tqfi_closed,tqfi_tsld,tqfi_fd,qfi,gap,degenerate"
    );
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 3);
    let dispatched = |r: &Vec<String>| num(&r[4]) - num(&r[5]);
    assert!(dispatched(&rows[0]).abs() < 1e-12);
    assert!(num(&rows[0][1]).abs() < 1e-12);
    assert!(num(&rows[0][3]).abs() < 1e-6);
    for r in &rows[1..] {
        assert_eq!(r[1], "");
        assert_eq!(r[2], "");
        assert!((dispatched(r) - 2.8).abs() < 1e-12);
        assert!((num(&r[3]) - 2.8).abs() < 2.8e-4);
        assert!((num(&r[4]) - 2.8).abs() < 1e-12);
    }
}

#[test]
fn sweep_m_full_rank_qubit_ends_with_zero_gap() {
    let dir = TempDir::new().unwrap();
    let rho = DensityMatrix::diagonal(&[0.6, 0.4]).unwrap();
    let path = write_instance(&dir, "q.json", &rho, &[Z, [0.0, -0.5], [0.0, 0.5], Z]);
    let out = tqfi(&["sweep-m", "--instance", path_str(&path)]);
    let rows = csv_rows(&stdout(&out));
    assert_eq!(rows.last().unwrap()[5], "0.0000000000000000e0");
    for r in &rows {
        assert!(num(&r[5]) >= -1e-9);
    }
}

#[test]
fn sweep_m_identity_generator_is_all_zero() {
    let dir = TempDir::new().unwrap();
    let rho = DensityMatrix::diagonal(&[0.5, 0.3, 0.2]).unwrap();
    let path = write_instance(&dir, "id.json", &rho, &[ONE, Z, Z, Z, ONE, Z, Z, Z, ONE]);
    let out = tqfi(&["sweep-m", "--instance", path_str(&path)]);
    assert!(out.status.success());
    for r in csv_rows(&stdout(&out)) {
        for field in &r[1..6] {
            if !field.is_empty() {
                assert!(num(field).abs() < 1e-9, "{r:?}");
            }
        }
    }
}

#[test]
fn sweep_delta_quotient_converges_linearly() {
    let dir = TempDir::new().unwrap();
    let rho = DensityMatrix::diagonal(&[0.5, 0.3, 0.2]).unwrap();
    let g = states::random_generator(3, 7);
    let family = UnitaryFamily::new(rho, g).unwrap();
    let path = dir.path().join("q.json");
    Instance::from_family(&family, 0.0).save(&path).unwrap();
    let target = tqfi::fisher::tqfi_closed(&family, 2).unwrap().value;

    let mut args = vec!["sweep-delta", "--instance", path_str(&path), "--m", "2"];
    let grid = ["2e-2", "1e-2", "5e-3", "2.5e-3", "1.25e-3"];
    for d in &grid {
        args.extend(["--delta", d]);
    }
    let out = tqfi(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert_eq!(
        text.lines().next().unwrap(),
        "delta,fstar,eight_one_minus_f_over_d2,bures_sq"
    );
    let rows = csv_rows(&text);
    let q: Vec<f64> = rows.iter().map(|r| num(&r[2])).collect();
    let diffs: Vec<f64> = q.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    for w in diffs.windows(2) {
        let ratio = w[1] / w[0];
        assert!((0.3..0.7).contains(&ratio), "{diffs:?}");
    }
    assert!((q.last().unwrap() - target).abs() < 1e-2 * target);
    for r in &rows {
        let f = num(&r[1]);
        assert!((num(&r[3]) - 2.0 * (1.0 - f)).abs() < 1e-15);
    }
}

#[test]
fn sweep_delta_guard_violation_exits_3() {
    let dir = TempDir::new().unwrap();
    let rho = DensityMatrix::diagonal(&[0.5, 0.3, 0.2]).unwrap();
    let path = write_instance(&dir, "q.json", &rho, &[Z, ONE, Z, ONE, Z, ONE, Z, ONE, Z]);
    let out = tqfi(&[
        "sweep-delta",
        "--instance",
        path_str(&path),
        "--m",
        "2",
        "--delta",
        "0.1",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trace guard"));
}

#[test]
fn random_instance_round_trips() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    assert!(tqfi(&[
        "random",
        "--d",
        "4",
        "--rank",
        "2",
        "--seed",
        "7",
        "--out",
        path_str(&a)
    ])
    .status
    .success());
    assert!(tqfi(&[
        "random",
        "--d",
        "4",
        "--rank",
        "2",
        "--seed",
        "7",
        "--out",
        path_str(&b)
    ])
    .status
    .success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let loaded = Instance::load(&a).unwrap();
    let family = loaded.to_family().unwrap();
    assert_eq!(family.dim(), 4);
    assert_eq!(family.rank(), 2);
    let again = Instance::from_family(&family, loaded.theta);
    assert_eq!(again, loaded);
}

#[test]
fn verify_small_config_passes_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, r#"{"seed": 11, "trials": 5}"#).unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    assert_eq!(
        tqfi(&["verify", "--config", path_str(&config), "--out", path_str(&a)])
            .status
            .code(),
        Some(0)
    );
    assert_eq!(
        tqfi(&["verify", "--config", path_str(&config), "--out", path_str(&b)])
            .status
            .code(),
        Some(0)
    );
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(report.as_array().unwrap().len(), 9);
    assert_eq!(report[0]["seed"], 11);
}

#[test]
fn verify_zero_trials_reports_nothing() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, r#"{"trials": 0}"#).unwrap();
    let out = tqfi(&["verify", "--config", path_str(&config)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out).trim(), "[]");
}

#[test]
fn verify_rejects_unknown_config_keys() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, r#"{"tolerances": {"chian": 1.0}}"#).unwrap();
    assert_eq!(tqfi(&["verify", "--config", path_str(&config)]).status.code(), Some(2));
}
