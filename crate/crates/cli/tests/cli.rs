use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn stripwet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stripwet")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(o: &Output) -> Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("json")
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn critical_point_for_pq() {
    let v = json(&stripwet(&["critical-point", "--law", "pq:p=0.3", "--a", "1"]));
    let beta_c = v["beta_c"].as_f64().unwrap();
    let exact = -(1.0 - (3.0 - 5f64.sqrt()) / 2.0 * 0.3).ln();
    assert!((beta_c - exact).abs() < 1e-9);
    assert!((beta_c - 0.121703).abs() < 2e-6);
    assert_eq!(v["nodes"], 2);
    assert_eq!(v["refinement_delta"].as_f64(), Some(0.0));
}

#[test]
fn pq_exact_dumps_constants() {
    let v = json(&stripwet(&["pq-exact", "--p", "0.3", "--json"]));
    assert_eq!(v["sumK"].as_f64(), Some(0.7));
    assert_eq!(v["q"].as_f64(), Some(0.4));
    assert!((v["C_1"].as_f64().unwrap() - 5.0 * (3.0 + 5f64.sqrt()) / 0.3).abs() < 1e-9);
}

#[test]
fn pq_z_small_instance() {
    // Z_1 constrained = q e^β + p e^β
    let o = stripwet(&["pq-z", "--p", "0.3", "--a", "1", "--beta", "0.5", "--N", "1", "--boundary", "constrained"]);
    assert!(o.status.success());
    let log_z: f64 = stdout(&o).trim().parse().unwrap();
    assert!((log_z - (0.7f64.ln() + 0.5)).abs() < 1e-11);
}

#[test]
fn unknown_flag_exits_2_with_usage() {
    let o = stripwet(&["pq-exact", "--p", "0.3", "--frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn invalid_parameters_exit_2() {
    assert_eq!(stripwet(&["pq-exact", "--p", "0.7"]).status.code(), Some(2));
    assert_eq!(stripwet(&["critical-point", "--law", "pq:p=0.3", "--a", "1.5"]).status.code(), Some(2));
    assert_eq!(stripwet(&["critical-point", "--law", "cauchy:s=1"]).status.code(), Some(2));
    assert_eq!(stripwet(&["free-energy", "--beta-grid", "0.5:0.1:3"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_1() {
    // the two-state kernel is fine, but a defective tilted kernel is not renewal-checkable
    let o = stripwet(&["renewal-check", "--beta", "-0.5", "--relative", "--chains", "10", "--seed", "1", "--j", "5"]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn simulate_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let o = stripwet(&[
            "--threads", threads, "simulate", "--beta", "0.1", "--N", "300", "--paths", "500", "--seed", "42",
            "--boundary", "constrained", "--out", out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        read(&out)
    };
    let a = run("a.csv", "1");
    let b = run("b.csv", "1");
    let c = run("c.csv", "3");
    assert_eq!(a, b);
    assert_eq!(a, c);
    let mut lines = a.lines();
    assert_eq!(lines.next(), Some("path,contacts,max_contact,L_A,R_A,final_height,max_height"));
    assert_eq!(lines.count(), 500);
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# pq partition function\np = 0.3\na = 1\nbeta = 0.5\nN = 1\nboundary = constrained\n").unwrap();
    let from_file = stripwet(&["--config", cfg.to_str().unwrap(), "pq-z"]);
    assert!(from_file.status.success(), "{}", String::from_utf8_lossy(&from_file.stderr));
    let log_z: f64 = stdout(&from_file).trim().parse().unwrap();
    assert!((log_z - (0.7f64.ln() + 0.5)).abs() < 1e-11);
    let overridden = stripwet(&["--config", cfg.to_str().unwrap(), "pq-z", "--beta", "0"]);
    let log_z: f64 = stdout(&overridden).trim().parse().unwrap();
    assert!((log_z - 0.7f64.ln()).abs() < 1e-11);
}

#[test]
fn kernel_cache_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("k.swk");
    let o = stripwet(&["kernel", "--law", "gauss:sigma=1", "--a", "1", "--nmax", "64", "--nodes", "8", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(&std::fs::read(&out).unwrap()[..8], b"SWKERNEL");

    let cache = dir.path().join("cache");
    let run = || {
        Command::new(env!("CARGO_BIN_EXE_stripwet"))
            .env("STRIPWET_CACHE_DIR", &cache)
            .args(["critical-point", "--law", "gauss:sigma=1", "--a", "1", "--nmax", "64", "--nodes", "8"])
            .output()
            .unwrap()
    };
    let first = json(&run());
    assert!(std::fs::read_dir(&cache).unwrap().count() >= 2);
    let second = json(&run());
    assert_eq!(first, second);
    assert!(first["refinement_delta"].as_f64().unwrap() < 1e-2);
}

#[test]
fn free_energy_csv_and_fit() {
    let o = stripwet(&["free-energy", "--beta-grid", "1e-3:1e-2:6", "--relative", "--log", "--fit"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("beta,F,delta_residual"));
    let rows: Vec<Vec<f64>> = lines
        .by_ref()
        .take(6)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert!(rows.windows(2).all(|w| w[1][1] > w[0][1]));
    let fit = lines.next().unwrap();
    let exponent: f64 = fit.split_whitespace().find_map(|t| t.strip_prefix("exponent=")).unwrap().parse().unwrap();
    assert!((exponent - 2.0).abs() < 0.15);
}

#[test]
fn ladder_csv_schema() {
    let o = stripwet(&["ladder", "--law", "pq:p=0.3", "--a", "1", "--seed", "3"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().next(), Some("x,U,V,asc_tail,desc_tail,U_se,V_se,asc_se,desc_se"));
}

#[test]
fn scaling_test_json_schema() {
    let v = json(&stripwet(&[
        "scaling-test", "--beta", "-0.15", "--relative", "--N", "128", "--paths", "2000", "--nref", "256", "--seed", "5",
    ]));
    assert_eq!(v["regime"], "subcritical");
    assert_eq!(v["n_paths"], 2000);
    assert_eq!(v["t"].as_array().unwrap().len(), 3);
    assert!(v["ks"].as_array().unwrap().iter().all(|k| k.as_f64().unwrap() < 0.2));
    let v = json(&stripwet(&[
        "scaling-test", "--beta", "0.5", "--relative", "--N", "64,256", "--paths", "500", "--seed", "5", "--regime", "super",
    ]));
    assert_eq!(v["median"].as_array().unwrap().len(), 2);
}

#[test]
fn contact_stats_and_asymptotics_csv() {
    let o = stripwet(&["contact-stats", "--beta", "-0.1", "--relative", "--N", "64,128", "--L", "5,10", "--paths", "200", "--seed", "1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some("N,L,p_max_contact,p_left,p_right"));
    assert_eq!(text.lines().count(), 5);

    let o = stripwet(&["asymptotics", "--kind", "localized", "--beta", "0.5", "--relative", "--N", "100,200"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "N,log_z,normalized,tv");
    let tv: f64 = rows[2].split(',').nth(3).unwrap().parse().unwrap();
    assert!(tv < 1e-6);
}

#[test]
fn renewal_check_two_state() {
    let o = stripwet(&["renewal-check", "--two-state", "--j", "50,100", "--chains", "20000", "--seed", "9"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let tvs: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(tvs.iter().all(|t| *t < 0.03), "{tvs:?}");
}

#[test]
fn simulate_continuous_with_dump() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("paths.bin");
    let o = stripwet(&[
        "simulate", "--law", "gauss:sigma=1", "--a", "1", "--nmax", "128", "--nodes", "8", "--beta", "0.3", "--N", "40",
        "--paths", "20", "--seed", "2", "--dump", dump.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let bytes = std::fs::read(&dump).unwrap();
    assert_eq!(&bytes[..8], b"SWPATHS\0");
    assert_eq!(bytes.len(), 8 + 4 + 8 + 8 + 20 * 40 * 8);
}
