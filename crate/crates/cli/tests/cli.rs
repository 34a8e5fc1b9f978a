use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn momenta(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_momenta"))
        .args(args)
        .env_remove("MOMENTA_DEFAULT_OUT")
        .output()
        .expect("spawn momenta")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("bad JSON ({e}): {}", String::from_utf8_lossy(&o.stdout)))
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn sgd_quadratic(p: f64, horizon: u64) -> Value {
    json!({
        "objective": {"name": "quadratic", "diag": [1.0, 4.0]},
        "oracle": {"kind": "additive_noise", "noise_scale": {"kind": "constant", "coefficient": 1.0}},
        "params": {
            "preset": "sgd",
            "alpha": {"kind": "power_law", "coefficient": 0.5, "exponent": -p}
        },
        "horizon": horizon,
        "w0": [1.0, 1.0]
    })
}

fn shb_quadratic(horizon: u64) -> Value {
    json!({
        "objective": {"name": "quadratic", "diag": [1.0, 4.0]},
        "oracle": {"kind": "additive_noise", "noise_scale": {"kind": "constant", "coefficient": 1.0}},
        "block": {"kind": "single_coordinate"},
        "params": {
            "preset": "shb",
            "mu": {"kind": "constant", "coefficient": 0.9},
            "alpha": {"kind": "power_law", "coefficient": 0.5, "exponent": -0.7}
        },
        "horizon": horizon,
        "w0": [1.0, 1.0]
    })
}

fn csvs(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    v.sort();
    v
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_one_csv_per_seed_and_a_summary() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &shb_quadratic(500));
    let out = tmp.path().join("out");
    let o = momenta(&["run", "--config", path_str(&cfg), "--seeds", "4", "--jobs", "2", "--out", path_str(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let files = csvs(&out);
    assert_eq!(files.len(), 4);
    let text = fs::read_to_string(&files[0]).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,J_theta,grad_norm,v_norm_sq,lyapunov,running_min_grad,alpha"));
    assert_eq!(lines.count(), 501);
    let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seeds"], json!([0, 1, 2, 3]));
    assert_eq!(summary["runs"].as_array().unwrap().len(), 4);
    assert_eq!(summary["diverged"], json!(0));
}

#[test]
fn runs_are_byte_identical_across_invocations_and_job_counts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &shb_quadratic(2000));
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let o = momenta(&["run", "--config", path_str(&cfg), "--seed-list", "3,1,7", "--out", path_str(&a)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = momenta(&["run", "--config", path_str(&cfg), "--seed-list", "3,1,7", "--jobs", "3", "--out", path_str(&b)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (fa, fb) = (csvs(&a), csvs(&b));
    assert_eq!(fa.len(), 3);
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.file_name(), y.file_name());
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{}", x.display());
    }
    assert_eq!(fs::read(a.join("summary.json")).unwrap(), fs::read(b.join("summary.json")).unwrap());
}

#[test]
fn different_seeds_give_different_trajectories() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &shb_quadratic(200));
    let out = tmp.path().join("o");
    let o = momenta(&["run", "--config", path_str(&cfg), "--seeds", "2", "--out", path_str(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let f = csvs(&out);
    assert_ne!(fs::read(&f[0]).unwrap(), fs::read(&f[1]).unwrap());
}

#[test]
fn override_is_echoed_and_the_echo_round_trips() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &shb_quadratic(300));
    let a = tmp.path().join("a");
    let o = momenta(&[
        "run",
        "--config",
        path_str(&cfg),
        "--override",
        "alpha.exponent=-0.8",
        "--seeds",
        "2",
        "--out",
        path_str(&a),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary: Value = serde_json::from_str(&fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["params"]["alpha"]["exponent"], json!(-0.8));

    // Re-running from the echoed config reproduces hash and trajectories.
    let echo = write_config(tmp.path(), "echo.json", &summary["config"]);
    let b = tmp.path().join("b");
    let o = momenta(&["run", "--config", path_str(&echo), "--out", path_str(&b)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let again: Value = serde_json::from_str(&fs::read_to_string(b.join("summary.json")).unwrap()).unwrap();
    assert_eq!(again["config_hash"], summary["config_hash"]);
    assert_eq!(again["config"], summary["config"]);
    for (x, y) in csvs(&a).iter().zip(&csvs(&b)) {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
    }
}

#[test]
fn hash_ignores_formatting_and_key_order() {
    let tmp = TempDir::new().unwrap();
    let base = shb_quadratic(100);
    let a = write_config(tmp.path(), "a.json", &base);
    let mut reordered = base.clone();
    reordered["w0"] = json!([1, 1]);
    reordered["horizon"] = json!(100.0);
    let text = serde_json::to_string(&reordered).unwrap();
    let b = tmp.path().join("b.json");
    fs::write(&b, text).unwrap();
    let run = |cfg: &Path, out: &str| {
        let dir = tmp.path().join(out);
        let o = momenta(&["run", "--config", path_str(cfg), "--out", path_str(&dir)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let s: Value = serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
        s["config_hash"].clone()
    };
    assert_eq!(run(&a, "x"), run(&b, "y"));
}

#[test]
fn classical_nag_momentum_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = shb_quadratic(100);
    cfg["params"]["mu"] = json!({"kind": "power_law", "coefficient": -1.0, "exponent": -1.0, "offset": 1.0, "shift": 2.0});
    let p = write_config(tmp.path(), "nag.json", &cfg);
    let out = tmp.path().join("o");
    let o = momenta(&["run", "--config", path_str(&p), "--out", path_str(&out)]);
    assert_ne!(code(&o), 0);
    assert!(stderr(&o).contains("mu bounded away from 1"), "{}", stderr(&o));
    assert!(!out.exists() || csvs(&out).is_empty());
}

#[test]
fn parse_errors_report_json_pointers() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = shb_quadratic(100);
    cfg["params"]["alpha"]["exponent"] = json!("fast");
    let p = write_config(tmp.path(), "bad.json", &cfg);
    let o = momenta(&["check", "--config", path_str(&p)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("at /params/alpha"), "{}", stderr(&o));

    let mut cfg = shb_quadratic(100);
    cfg["oracle"] = json!({"kind": "additive_noise"});
    let p = write_config(tmp.path(), "bad2.json", &cfg);
    let o = momenta(&["run", "--config", path_str(&p), "--out", path_str(&tmp.path().join("o"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("at /oracle"), "{}", stderr(&o));
}

#[test]
fn divergence_sets_the_exit_code_unless_allowed() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = sgd_quadratic(0.0, 400);
    cfg["params"]["alpha"] = json!({"kind": "constant", "coefficient": 3.0});
    let p = write_config(tmp.path(), "div.json", &cfg);
    let out = tmp.path().join("o");
    let o = momenta(&["run", "--config", path_str(&p), "--seeds", "2", "--out", path_str(&out)]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    assert!(stderr(&o).contains("diverged at step"), "{}", stderr(&o));
    let o = momenta(&["run", "--config", path_str(&p), "--seeds", "2", "--out", path_str(&out), "--allow-divergence"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let o = momenta(&["rates", path_str(&out), "--target-lambda", "0.5"]);
    assert_eq!(code(&o), 1);
    assert_eq!(stdout_json(&o)["aggregate"]["classification"], json!("inconclusive"));
}

#[test]
fn default_output_root_comes_from_the_environment() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &shb_quadratic(50));
    let root = tmp.path().join("env-root");
    let o = Command::new(env!("CARGO_BIN_EXE_momenta"))
        .args(["run", "--config", path_str(&cfg)])
        .env("MOMENTA_DEFAULT_OUT", &root)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(root.join("summary.json").exists());
}

fn check(cfg: &Value, extra: &[&str]) -> (i32, Value) {
    let tmp = TempDir::new().unwrap();
    let p = write_config(tmp.path(), "c.json", cfg);
    let mut args = vec!["check", "--config", path_str(&p)];
    args.extend_from_slice(extra);
    let o = momenta(&args);
    assert_ne!(code(&o), 2, "{}", stderr(&o));
    (code(&o), stdout_json(&o))
}

fn entry<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["schedule"]["entries"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["name"] == name)
        .unwrap_or_else(|| panic!("no entry {name}"))
}

#[test]
fn check_accepts_robbins_monro_steps() {
    let (c, r) = check(&sgd_quadratic(0.8, 100), &[]);
    assert_eq!(c, 0);
    assert_eq!(r["schedule"]["condition_set"], json!("RM"));
    assert_eq!(r["pass"], json!(true));
}

#[test]
fn check_rejects_the_square_summable_boundary() {
    let (c, r) = check(&sgd_quadratic(0.5, 100), &[]);
    assert_eq!(c, 1);
    let e = entry(&r, "sum_alpha_sq_finite");
    assert_eq!(e["satisfied"], json!(false));
    assert_eq!(e["margin"], json!(0.0));
}

#[test]
fn check_kwb_uses_the_increment_exponent() {
    let mut cfg = sgd_quadratic(0.4, 100);
    cfg["oracle"] = json!({
        "kind": "spsa",
        "increment": {"kind": "power_law", "coefficient": 1.0, "exponent": -0.3}
    });
    let (c, r) = check(&cfg, &[]);
    assert_eq!(c, 1);
    assert_eq!(r["schedule"]["condition_set"], json!("KWB"));
    let e = entry(&r, "sum_alpha_c_finite");
    assert_eq!(e["satisfied"], json!(false));
    assert!((e["margin"].as_f64().unwrap() + 0.3).abs() < 1e-12);
}

#[test]
fn check_set_flag_overrides_inference() {
    let mut cfg = sgd_quadratic(0.8, 100);
    cfg["check"] = json!({"gamma": 0.5, "delta": 0.1});
    let (c, r) = check(&cfg, &["--set", "Theorem21"]);
    assert_eq!(r["schedule"]["condition_set"], json!("Theorem21"));
    assert_eq!(c, 0, "{r}");
}

#[test]
fn check_reports_parameter_violations() {
    let mut cfg = shb_quadratic(100);
    cfg["params"]["mu"] = json!({"kind": "constant", "coefficient": 1.0});
    let (c, r) = check(&cfg, &[]);
    assert_eq!(c, 1);
    assert!(r["parameter_error"].as_str().unwrap().contains("mu bounded away from 1"));
}

fn lambda(args: &[&str]) -> (i32, Value, String) {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("l");
    let mut all = vec!["lambda", "--out", path_str(&out)];
    all.extend_from_slice(args);
    let o = momenta(&all);
    let csv = fs::read_to_string(out.join("lambda.csv")).unwrap_or_default();
    (code(&o), stdout_json(&o), csv)
}

#[test]
fn lambda_decreasing_momentum_blows_up() {
    let (c, v, csv) = lambda(&["--mu", r#"{"kind":"geometric","coefficient":0.9,"ratio":0.99}"#]);
    assert_eq!(c, 0);
    assert_eq!(v["lemma"], json!("A1"));
    assert!(v["t_first"].as_u64().is_some());
    assert!(csv.starts_with("t,lambda,eta,one_plus_lambda\n"));
}

#[test]
fn lambda_increasing_momentum_goes_negative() {
    let (c, v, _) = lambda(&[
        "--mu",
        r#"{"kind":"geometric","coefficient":-0.4,"ratio":0.75,"offset":0.9}"#,
        "--lambda0",
        "1",
    ]);
    assert_eq!(c, 0);
    assert_eq!(v["lemma"], json!("A2"));
    assert_eq!(v["t_first"], json!(4));
    assert!((v["t0_bound"].as_f64().unwrap() - 13.4271726633914).abs() < 1e-9);
}

#[test]
fn lambda_constant_momentum_is_a_fixed_point() {
    let (c, v, csv) = lambda(&["--mu", r#"{"kind":"constant","coefficient":0.75}"#, "--horizon", "20"]);
    assert_eq!(c, 0);
    assert_eq!(v["lemma"], json!("fixed point"));
    let lambdas: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(lambdas.len(), 21);
    assert!(lambdas.iter().all(|l| *l == "3.0"), "{lambdas:?}");
}

#[test]
fn lambda_rejects_invalid_schedules() {
    let tmp = TempDir::new().unwrap();
    let o = momenta(&["lambda", "--mu", r#"{"kind":"constant","coefficient":1.5}"#, "--out", path_str(tmp.path())]);
    assert_eq!(code(&o), 2);
}

#[test]
fn rates_separate_reachable_from_unreachable_targets() {
    let tmp = TempDir::new().unwrap();
    // SHB with mu = 0.9, alpha = 0.5 (t+1)^-0.8, unit noise, 20 seeds.
    let mut cfg = shb_quadratic(100_000);
    cfg["block"] = json!({"kind": "full"});
    cfg["params"]["alpha"]["exponent"] = json!(-0.8);
    cfg["seeds"] = json!((0..20).collect::<Vec<u64>>());
    let p = write_config(tmp.path(), "c.json", &cfg);
    let out = tmp.path().join("o");
    let o = momenta(&["run", "--config", path_str(&p), "--out", path_str(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let o = momenta(&["rates", path_str(&out), "--target-lambda", "0.5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let v = stdout_json(&o);
    assert_eq!(v["per_seed"].as_array().unwrap().len(), 20);
    assert_eq!(v["aggregate"]["classification"], json!("o_rate_consistent"));

    let o = momenta(&["rates", path_str(&out), "--target-lambda", "0.99"]);
    assert_eq!(code(&o), 1);
    assert_eq!(stdout_json(&o)["aggregate"]["classification"], json!("inconsistent"));
}

#[test]
fn rates_refuses_empty_and_mixed_directories() {
    let tmp = TempDir::new().unwrap();
    let o = momenta(&["rates", path_str(tmp.path()), "--target-lambda", "0.5"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("no run CSVs"));

    let out = tmp.path().join("o");
    for (i, p) in [0.8, 0.7].iter().enumerate() {
        let cfg = write_config(tmp.path(), &format!("c{i}.json"), &sgd_quadratic(*p, 200));
        let o = momenta(&["run", "--config", path_str(&cfg), "--seed-list", &i.to_string(), "--out", path_str(&out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let o = momenta(&["rates", path_str(&out), "--target-lambda", "0.5"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("mixed config hashes"), "{}", stderr(&o));
}

#[test]
fn oracle_and_block_checks_pass_for_built_ins() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = shb_quadratic(100);
    cfg["block"] = json!({"kind": "multi_coordinate", "n_draws": 2});
    let p = write_config(tmp.path(), "c.json", &cfg);
    let o = momenta(&["oracle-check", "--config", path_str(&p), "--points", "3", "--replications", "2000"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(stdout_json(&o).as_array().unwrap().len(), 3);

    let o = momenta(&["block-check", "--config", path_str(&p), "--replications", "20000"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(stdout_json(&o)["kind"], json!("multi_coordinate"));
}

#[test]
fn shipped_configs_parse_and_check() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let expect = [
        ("shb_quadratic.json", 0),
        ("snag_double_well_blocks.json", 0),
        ("spsa_quadratic.json", 1),
        ("nag_classical.json", 1),
    ];
    for (name, want) in expect {
        let o = momenta(&["check", "--config", path_str(&dir.join(name))]);
        assert_eq!(code(&o), want, "{name}: {}", stderr(&o));
    }
}
