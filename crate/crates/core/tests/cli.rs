use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use statrs::distribution::{ContinuousCDF, Normal};

const GAMMA_PUT: &str = r#"
[kernel]
type = "gamma_ou"
a = 1.0
b = 20.0

[model]
lambda = 1.0
rho = -0.5
r = 0.03
horizon = 1.0
v0 = 0.04

[payoff]
type = "put"
strike = 1.0

[grid]
x_min = -1.0
x_max = 1.0
n_x = 41
v_max = 0.6
n_v = 21
n_t = 20

[mc]
n_paths = 2000
seed = 5
path_count = 20
path_times = 10
"#;

const NULL_EUROPEAN: &str = r#"
[kernel]
type = "null"

[model]
lambda = 1.0
rho = -0.5
r = 0.03
horizon = 1.0
v0 = 0.04

[payoff]
type = "put"
strike = 1.0

[grid]
x_min = -1.0
x_max = 1.0
n_x = 201
v_min = 0.01
v_max = 0.04
n_v = 11
n_t = 200
mode = "european"
rungs = 1
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p
}

fn bns(config: &Path, out: &Path, cmd: &str, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bns"))
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect()
}

fn headers(path: &Path) -> Vec<String> {
    csv::Reader::from_path(path).unwrap().headers().unwrap().iter().map(String::from).collect()
}

#[test]
fn missing_key_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &GAMMA_PUT.replace("b = 20.0\n", ""));
    let out = bns(&cfg, &dir.path().join("o"), "price", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kernel.b"));
}

#[test]
fn unknown_key_and_bad_value_exit_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &GAMMA_PUT.replace("[grid]\n", "[grid]\nspacing = 2\n"));
    assert_eq!(bns(&cfg, &dir.path().join("o"), "price", &[]).status.code(), Some(2));
    let cfg = write_config(dir.path(), &GAMMA_PUT.replace("rho = -0.5", "rho = 0.5"));
    assert_eq!(bns(&cfg, &dir.path().join("o"), "simulate", &[]).status.code(), Some(2));
}

#[test]
fn unstable_grid_exits_with_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    // Heavy jump activity with one time step breaks the explicit jump bound.
    let text = GAMMA_PUT.replace("a = 1.0", "a = 400.0").replace("n_t = 20", "n_t = 1");
    let cfg = write_config(dir.path(), &text);
    let out = bns(&cfg, &dir.path().join("o"), "price", &[]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn null_kernel_price_matches_black_scholes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), NULL_EUROPEAN);
    let o = dir.path().join("o");
    let out = bns(&cfg, &o, "price", &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(headers(&o.join("surface.csv")), ["t", "x", "v", "u", "exercised"]);
    let probe = rows(&o.join("probes.csv"));
    let got: f64 = probe[0][2].parse().unwrap();
    let w = 0.04 * (1.0 - (-1.0f64).exp());
    let n = Normal::standard();
    let d1 = (0.03 + 0.5 * w) / w.sqrt();
    let want = (-0.03f64).exp() * n.cdf(-(d1 - w.sqrt())) - n.cdf(-d1);
    assert!((got - want).abs() / want < 5e-3, "{got} vs {want}");
}

#[test]
fn one_step_grid_exercises_deep_in_the_money() {
    let dir = tempfile::tempdir().unwrap();
    let text = GAMMA_PUT.replace("n_t = 20", "n_t = 1") + "\n[output]\nprobes = [[-0.5, 0.04], [-0.7, 0.1]]\n";
    let cfg = write_config(dir.path(), &text);
    let o = dir.path().join("o");
    assert!(bns(&cfg, &o, "price", &[]).status.success());
    for row in rows(&o.join("probes.csv")) {
        let (u, h): (f64, f64) = (row[2].parse().unwrap(), row[3].parse().unwrap());
        assert!(h > 0.0 && (u - h).abs() < 1e-6, "{row:?}");
    }
}

#[test]
fn localized_price_is_written_when_delta_is_set() {
    let dir = tempfile::tempdir().unwrap();
    let text = GAMMA_PUT.replace("n_t = 20", "n_t = 20\ndelta = 0.03");
    let cfg = write_config(dir.path(), &text);
    let o = dir.path().join("o");
    let out = bns(&cfg, &o, "price", &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let row = &rows(&o.join("probes.csv"))[0];
    let (u, loc): (f64, f64) = (row[2].parse().unwrap(), row[4].parse().unwrap());
    assert!(loc <= u + 1e-6);
    assert!(o.join("surface_localized.csv").exists());
}

#[test]
fn mc_pricing_writes_its_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &GAMMA_PUT.replace("seed = 5", "seed = 5\nprice = true\nn_dates = 10"));
    let o = dir.path().join("o");
    assert!(bns(&cfg, &o, "price", &[]).status.success());
    let path = o.join("mc.csv");
    assert_eq!(headers(&path), ["method", "value", "std_error", "n_paths", "n_dates", "seed", "wall_time"]);
    let r = rows(&path);
    assert_eq!(r[0][0], "lsmc");
    assert_eq!(r[0][4], "10");
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), GAMMA_PUT);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert!(bns(&cfg, &a, "simulate", &[]).status.success());
    assert!(bns(&cfg, &b, "simulate", &[]).status.success());
    assert!(bns(&cfg, &c, "simulate", &["--seed", "6"]).status.success());
    let read = |d: &Path| fs::read(d.join("paths.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn simulated_columns_satisfy_the_path_identity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), GAMMA_PUT);
    let o = dir.path().join("o");
    assert!(bns(&cfg, &o, "simulate", &[]).status.success());
    let path = o.join("paths.csv");
    assert_eq!(headers(&path), ["path_id", "t", "V", "V_star", "X", "Z_cum"]);
    let r = rows(&path);
    assert_eq!(r.len(), 20 * 11);
    for row in r {
        let f: Vec<f64> = row[1..].iter().map(|s| s.parse().unwrap()).collect();
        let (v, v_star, z) = (f[1], f[2], f[4]);
        assert!((v_star - (0.04 - v + z)).abs() < 1e-10, "{row:?}");
    }
}

#[test]
fn null_kernel_variance_column_is_exponential_decay() {
    let dir = tempfile::tempdir().unwrap();
    let text = NULL_EUROPEAN.replace("v0 = 0.04", "v0 = 1.0") + "\n[mc]\npath_count = 3\npath_times = 8\n";
    let cfg = write_config(dir.path(), &text);
    let o = dir.path().join("o");
    assert!(bns(&cfg, &o, "simulate", &[]).status.success());
    for row in rows(&o.join("paths.csv")) {
        let (t, v): (f64, f64) = (row[1].parse().unwrap(), row[2].parse().unwrap());
        assert!((v - (-t).exp()).abs() < 1e-15, "{row:?}");
    }
}

#[test]
fn converge_with_one_rung_has_no_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), NULL_EUROPEAN);
    let o = dir.path().join("o");
    let out = bns(&cfg, &o, "converge", &[]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("observed order = n/a"));
    assert_eq!(headers(&o.join("convergence.csv")), ["N_x", "N_v", "N_t", "value_at_probe", "runtime_ms"]);
    assert_eq!(rows(&o.join("convergence.csv")).len(), 1);
}

#[test]
fn converge_on_null_kernel_is_at_least_first_order() {
    let dir = tempfile::tempdir().unwrap();
    let text = NULL_EUROPEAN
        .replace("n_x = 201", "n_x = 51")
        .replace("n_t = 200", "n_t = 50")
        .replace("v_min = 0.01", "v_min = 0.0")
        .replace("rungs = 1", "rungs = 3");
    let cfg = write_config(dir.path(), &text);
    let out = bns(&cfg, &dir.path().join("o"), "converge", &[]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let order: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("observed order = "))
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or_else(|| panic!("no order in {stdout}"));
    assert!(order >= 1.0, "{stdout}");
}

#[test]
fn verify_on_null_kernel_skips_jump_checks() {
    let dir = tempfile::tempdir().unwrap();
    let text = NULL_EUROPEAN
        .replace("n_x = 201", "n_x = 41")
        .replace("n_t = 200", "n_t = 20")
        .replace("v_min = 0.01", "v_min = 0.0")
        + "\n[mc]\nn_paths = 5000\n\n[verify]\ndpp_paths = 2000\n";
    let cfg = write_config(dir.path(), &text);
    let o = dir.path().join("o");
    let out = bns(&cfg, &o, "verify", &[]);
    assert!(matches!(out.status.code(), Some(0) | Some(1)), "{}", String::from_utf8_lossy(&out.stderr));
    let path = o.join("summary.csv");
    assert_eq!(headers(&path), ["check", "status", "measured", "bound", "budget_grid", "budget_stat"]);
    let status = |name: &str| rows(&path).into_iter().find(|r| r[0] == name).map(|r| r[1].clone()).unwrap();
    assert_eq!(status("kernel_conditions"), "n/a");
    assert_eq!(status("extrapolated_mass"), "n/a");
}

#[test]
fn verify_reports_a_small_variance_range_as_warning() {
    let dir = tempfile::tempdir().unwrap();
    let text = GAMMA_PUT.replace("v_max = 0.6", "v_max = 0.15").replace("n_paths = 2000", "n_paths = 4000")
        + "\n[verify]\ndpp_paths = 2000\n";
    let cfg = write_config(dir.path(), &text);
    let o = dir.path().join("o");
    let out = bns(&cfg, &o, "verify", &[]);
    assert!(matches!(out.status.code(), Some(0) | Some(1)), "{}", String::from_utf8_lossy(&out.stderr));
    let r = rows(&o.join("summary.csv"));
    let status = |name: &str| r.iter().find(|row| row[0] == name).map(|row| row[1].clone()).unwrap();
    assert_eq!(status("extrapolated_mass"), "warn");
    assert_eq!(status("variance_headroom"), "warn");
}
