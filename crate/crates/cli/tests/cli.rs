use std::path::Path;
use std::process::{Command, Output};

fn takagi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_takagi"))
        .args(args)
        .env_remove("TAKAGI_SEED")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn eval_tabulates_the_grid() {
    let o = takagi(&["eval", "--seq", "geometric:r=0.5", "--grid", "1024", "--tol", "1e-10"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,f,abs_error"));
    assert_eq!(lines.count(), 1024);
}

#[test]
fn eval_quarter_ratio_is_a_parabola() {
    let o = takagi(&["eval", "--seq", "geometric:r=0.25", "--grid", "4", "--tol", "1e-12"]);
    assert_eq!(o.status.code(), Some(0));
    for line in stdout(&o).lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
        assert!((v[1] - v[0] * (1.0 - v[0])).abs() <= v[2].max(1e-12), "{line}");
    }
}

#[test]
fn csv_numbers_keep_seventeen_digits() {
    let o = takagi(&["eval", "--seq", "geometric:r=0.3", "--grid", "3", "--bits", "256"]);
    assert_eq!(o.status.code(), Some(0));
    let row = stdout(&o).lines().nth(2).unwrap().to_string();
    let x = row.split(',').next().unwrap();
    assert_eq!(x, "3.3333333333333331e-1");
    assert_eq!(x.parse::<f64>().unwrap(), 1.0 / 3.0);
}

#[test]
fn malformed_sequence_is_a_usage_error() {
    let o = takagi(&["eval", "--seq", "powerlaw:alfa=2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("alpha"));
    assert_eq!(takagi(&["verify", "nonsense"]).status.code(), Some(2));
}

#[test]
fn precision_exhaustion_exits_three() {
    // 1/3 is not dyadic, so a slowly decaying series needs far more than 128 digits
    let o = takagi(&["eval", "--seq", "powerlaw:alpha=2", "--grid", "3", "--bits", "128"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn classify_reports_verdicts_and_class() {
    let o = takagi(&["classify", "--seq", "geometric:r=0.25"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["conditions"][0]["condition"], "C14");
    assert_eq!(v["conditions"][0]["verdict"], "Fails");
    assert_eq!(v["differentiability"]["class"], "AbsolutelyContinuous");
    let v = json(&takagi(&["classify", "--seq", "stretchexp:K=1,beta=0.7"]));
    assert_eq!(v["conditions"][3]["verdict"], "Fails");
}

#[test]
fn failing_suite_still_writes_its_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lil.json");
    let o = takagi(&["verify", "lil", "--samples", "20", "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["verdict"], false);
    assert!(report["timestamp"].is_string());
}

#[test]
fn appendix_suite_passes() {
    let o = takagi(&["verify", "appendix", "--K", "1", "--beta", "0.5", "--no-timestamp"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["params"]["config"]["appendix"]["params"][0][1], 0.5);
    assert!(v.get("timestamp").is_none());
}

#[test]
fn negative_control_is_flagged() {
    let o = takagi(&["verify", "clt", "--seq", "geometric:r=0.5", "--N", "200", "--samples", "5000", "--no-timestamp"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["params"]["negative_control"], true);
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn flags_override_file_which_overrides_env() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    write(&cfg, "seed = 5\nsamples = 3\n");
    let c = cfg.to_str().unwrap();
    let seed_of = |args: &[&str], env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_takagi"));
        cmd.args(args).env_remove("TAKAGI_SEED");
        if let Some(e) = env {
            cmd.env("TAKAGI_SEED", e);
        }
        let o = cmd.args(["--format", "json"]).output().unwrap();
        let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        v["batch"]["seed"].as_u64().unwrap()
    };
    assert_eq!(seed_of(&["sample", "--config", c], Some("9")), 5);
    assert_eq!(seed_of(&["sample", "--config", c, "--seed", "8"], Some("9")), 8);
    assert_eq!(seed_of(&["sample"], Some("9")), 9);
    assert_eq!(seed_of(&["sample"], None), 7);
}

#[test]
fn effective_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first.toml");
    let o = takagi(&["verify", "lil", "--eps", "0.25", "--seed", "3", "--print-config", "--output", first.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let second = dir.path().join("second.toml");
    let o = takagi(&["verify", "lil", "--config", first.to_str().unwrap(), "--print-config", "--output", second.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let a = std::fs::read_to_string(&first).unwrap();
    assert_eq!(a, std::fs::read_to_string(&second).unwrap());
    assert!(a.contains("eps = 0.25"));
}

#[test]
fn unknown_config_keys_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    write(&cfg, "sede = 1\n");
    let o = takagi(&["classify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn moments_and_asymptotics_tables() {
    let o = takagi(&["moments", "--seq", "geometric:r=0.5", "--N", "1,2"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    // m_1 = ½ Σ 2⁻ⁿ = ½ and s²_1 = (1/12)(1/3)
    assert_eq!(row[1].parse::<f64>().unwrap(), 0.5);
    assert!((row[3].parse::<f64>().unwrap() - 1.0 / 36.0).abs() < 1e-16);
    let o = takagi(&["asymptotics", "--K", "1", "--beta", "0.5", "--a", "4,16"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().skip(1).all(|l| l.ends_with(",true")));
}
