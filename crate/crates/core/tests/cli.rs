use std::path::Path;
use std::process::{Command, Output};

fn mimal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mimal"))
        .args(args)
        .env_remove("MIMAL_SEED")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_fixture(dir: &Path) -> String {
    let path = dir.join("d.csv");
    std::fs::write(
        &path,
        "site,y,x1,z1\na,1.0,0.5,0.1\na,2.1,1.0,-0.3\na,2.9,1.5,0.2\nb,0.2,0.5,0.4\nb,1.1,1.0,-0.1\nb,1.4,1.5,0.0\n",
    )
    .unwrap();
    path.display().to_string()
}

#[test]
fn analyze_prints_a_json_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_fixture(dir.path());
    let o = mimal(&[
        "analyze", "--data", &data, "--outcome", "y", "--source", "site", "--exposure", "x1", "--loss", "squared_error", "--no-cross-fit",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["target"], "x1");
    assert_eq!(v["ci"].as_array().unwrap().len(), 2);
    assert_eq!(v["design"], "independent");
}

#[test]
fn coverage_writes_the_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs/s1");
    let o = mimal(&["coverage", "--scenario", "sim1", "--reps", "50", "--seed", "7", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["report.json", "replications.csv", "config-echo.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let csv = std::fs::read_to_string(out.join("replications.csv")).unwrap();
    assert_eq!(csv.lines().count(), 51);
    assert!(stdout(&o).contains("coverage"));
}

#[test]
fn config_echo_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let o = mimal(&["simulate", "--scenario", "sim5", "--seed", "3", "--K", "3", "--out", first.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let echo = first.join("config-echo.json");
    let o2 = mimal(&["simulate", "--config", echo.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert!(o2.status.success(), "{}", stderr(&o2));
    let a = std::fs::read(first.join("report.json")).unwrap();
    let b = std::fs::read(second.join("report.json")).unwrap();
    assert_eq!(a, b);
    let cfg: serde_json::Value = serde_json::from_slice(&std::fs::read(&echo).unwrap()).unwrap();
    assert_eq!(cfg["spec"]["K"], 3);
    assert_eq!(cfg["seed"], 3);
}

#[test]
fn seed_falls_back_to_the_environment() {
    let with_flag = mimal(&["simulate", "--scenario", "sim4", "--seed", "42"]);
    let with_env = Command::new(env!("CARGO_BIN_EXE_mimal"))
        .args(["simulate", "--scenario", "sim4"])
        .env("MIMAL_SEED", "42")
        .output()
        .unwrap();
    assert!(with_flag.status.success() && with_env.status.success());
    assert_eq!(stdout(&with_flag), stdout(&with_env));
}

#[test]
fn errors_map_to_exit_codes_with_a_kind_prefix() {
    let usage = mimal(&["analyze", "--bogus"]);
    assert_eq!(usage.status.code(), Some(1));
    assert!(stderr(&usage).starts_with("error[usage]:"));

    let config = mimal(&["simulate", "--scenario", "sim1", "--alpha", "2"]);
    assert_eq!(config.status.code(), Some(1));
    assert!(stderr(&config).starts_with("error[config]:"));

    let missing = mimal(&["analyze", "--data", "/nonexistent/d.csv", "--exposure", "x1"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(stderr(&missing).starts_with("error[io]:"));

    let dir = tempfile::tempdir().unwrap();
    let data = write_fixture(dir.path());
    let bad_outcome = mimal(&["analyze", "--data", &data, "--outcome", "y", "--source", "site", "--exposure", "x1", "--loss", "logistic", "--no-cross-fit"]);
    assert_eq!(bad_outcome.status.code(), Some(2));
    assert_eq!(stderr(&bad_outcome).lines().count(), 1);

    let help = mimal(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
}

#[test]
fn oracle_check_passes_on_small_instances() {
    let o = mimal(&["oracle-check", "--instances", "4", "--rows", "500", "--seed", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).matches("PASS").count(), 4);
}

/// Three sites on a shared hourly index with a wind-direction group, the
/// layout of an air-quality panel.
fn air_quality_fixture(dir: &Path) -> String {
    let mut s = String::from("station,hour,PM2.5,TEMP,DEWP,PRES,RAIN,wd_N,wd_E\n");
    for (k, station) in ["A", "B", "C"].iter().enumerate() {
        for t in 0..120usize {
            let f = |a: usize, b: usize| ((t * a + k * 7) % b) as f64 / b as f64 - 0.5;
            let (temp, dewp, pres, rain) = (f(37, 101), f(53, 97), f(29, 89), f(17, 83));
            let (wn, we) = (f(11, 7), f(13, 5));
            let noise = f(71, 79);
            let pm = 2.0 * dewp - (1.0 + 0.3 * k as f64) * temp + 0.5 * wn + 0.2 * pres + noise;
            s.push_str(&format!("{station},{t},{pm},{temp},{dewp},{pres},{rain},{wn},{we}\n"));
        }
    }
    let path = dir.join("air.csv");
    std::fs::write(&path, s).unwrap();
    path.display().to_string()
}

#[test]
fn paired_scan_with_a_grouped_block() {
    let dir = tempfile::tempdir().unwrap();
    let data = air_quality_fixture(dir.path());
    let out = dir.path().join("scan");
    let o = mimal(&[
        "scan",
        "--data",
        &data,
        "--outcome",
        "PM2.5",
        "--source",
        "station",
        "--time",
        "hour",
        "--paired",
        "--ridge-q",
        "0.001",
        "--exposure-group",
        "WC:wd_N,wd_E",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let targets: Vec<&str> = text.lines().skip(1).map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(targets, ["TEMP", "DEWP", "PRES", "RAIN", "WC"]);
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    let rows = report.as_array().unwrap();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[1]["estimate"]["design"], "paired");
    assert_eq!(rows[4]["columns"], serde_json::json!(["wd_N", "wd_E"]));
    assert_eq!(rows[0]["source_estimates"].as_array().unwrap().len(), 3);
    let echo: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("config-echo.json")).unwrap()).unwrap();
    assert_eq!(echo["spec"]["ridge_delta"], 0.001);
}

#[test]
fn in_process_runner_matches_the_binary() {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = mimal::cli::run(["mimal", "simulate", "--scenario", "sim4", "--seed", "42"], &mut out, &mut err);
    assert_eq!(code, 0, "{}", String::from_utf8_lossy(&err));
    let bin = mimal(&["simulate", "--scenario", "sim4", "--seed", "42"]);
    assert_eq!(String::from_utf8(out).unwrap(), stdout(&bin));
}
