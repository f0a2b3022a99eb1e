use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn nsope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nsope")).args(args).env_remove("OPEN_NS_JOBS").output().expect("binary runs")
}

fn fixture(name: &str) -> String {
    format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn plot(results: &Path, out: &Path) -> Output {
    nsope(&["plot", "--results", results.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

#[test]
fn golden_sweep_svg() {
    let dir = tempfile::tempdir().unwrap();
    let out = plot(Path::new(&fixture("small_results.csv")), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let got = fs::read_to_string(dir.path().join("sweep.svg")).unwrap();
    let want = fs::read_to_string(fixture("small_sweep.svg")).unwrap();
    assert_eq!(got, want);
}

#[test]
fn empty_results_give_empty_axes() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("results.csv");
    fs::write(&csv, "domain,speed,algorithm,trial,predicted,truth,error,flags\n").unwrap();
    let out = plot(&csv, dir.path());
    assert!(out.status.success());
    let svg = fs::read_to_string(dir.path().join("sweep.svg")).unwrap();
    assert!(svg.contains("no data"));
    assert!(!svg.contains("<circle") && !svg.contains("<polyline"));
}

#[test]
fn single_cell_is_one_point() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("results.csv");
    fs::write(&csv, "domain,speed,algorithm,trial,predicted,truth,error,flags\nmedevac,1,WIS,0,5,4,1,\n").unwrap();
    assert!(plot(&csv, dir.path()).status.success());
    let svg = fs::read_to_string(dir.path().join("sweep.svg")).unwrap();
    // one point in the bias panel and one in the MSE panel
    assert_eq!(svg.matches("<circle").count(), 2);
    assert!(!svg.contains("<polyline"));
}

#[test]
fn schema_errors_report_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("results.csv");
    fs::write(
        &csv,
        "domain,speed,algorithm,trial,predicted,truth,error,flags\nmedevac,1,WIS,0,5,4,1,\nmedevac,fast,WIS,1,5,4,1,\n",
    )
    .unwrap();
    let out = plot(&csv, dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"), "{}", String::from_utf8_lossy(&out.stderr));

    fs::write(&csv, "domain,speed,algo\n").unwrap();
    assert_eq!(plot(&csv, dir.path()).status.code(), Some(1));
}

#[test]
fn unknown_key_fails_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("never");
    let out = nsope(&["sweep", "--out", target.to_str().unwrap(), "--set", "params.not_a_key=3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("params.not_a_key"));
    assert!(!target.exists());

    let config = dir.path().join("bad.toml");
    fs::write(&config, "[params]\nopen_p = 20\nlag = 3\n").unwrap();
    let out = nsope(&["sweep", "--out", target.to_str().unwrap(), "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!target.exists());
}

#[test]
fn demo_emits_three_panels_quickly() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let out = nsope(&["demo", "--out", dir.path().to_str().unwrap()]);
    assert!(start.elapsed() < Duration::from_secs(60));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["demo_true", "demo_estimates", "demo_forecast"] {
        assert!(fs::read_to_string(dir.path().join(format!("{name}.svg"))).unwrap().starts_with("<svg"));
        assert!(dir.path().join(format!("{name}.csv")).exists());
    }
}

#[test]
fn collect_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let small = [
        "--set",
        "n_episodes=120",
        "--set",
        "horizon=10",
        "--set",
        "params.open_p=10",
        "--set",
        "params.swis_window=50",
    ];
    let mut args = vec!["collect", "--out", d, "--speed", "1"];
    args.extend(small);
    assert!(nsope(&args).status.success());
    let data = dir.path().join("dataset.csv");
    let state = dir.path().join("state.bin");
    let mut args = vec!["evaluate", "--out", d, "--data", data.to_str().unwrap(), "--state", state.to_str().unwrap()];
    args.extend(["--algorithm", "WIS"]);
    args.extend(small);
    let out = nsope(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("WIS") && stdout.contains("truth"));
    let forecast = fs::read_to_string(dir.path().join("forecast_WIS.csv")).unwrap();
    assert!(forecast.starts_with("episode_index,predicted_J\n121,"));
    assert_eq!(forecast.lines().count(), 11);
}

#[test]
fn sweep_is_reproducible_across_job_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = |dir: &Path, jobs: &'static str| {
        let mut v: Vec<String> =
            ["sweep", "--seed", "9", "--jobs", jobs, "--out"].iter().map(|s| s.to_string()).collect();
        v.push(dir.to_str().unwrap().to_string());
        for s in [
            "domains=[\"robotoy_active\"]",
            "speeds=[0,1]",
            "n_trials=2",
            "n_episodes=100",
            "horizon=5",
            "n_future_clones=3",
            "params.open_p=10",
            "params.swis_window=40",
            "algorithms=[\"WIS\",\"OPEN\"]",
        ] {
            v.push("--set".into());
            v.push(s.into());
        }
        v
    };
    for (dir, jobs) in [(&a, "1"), (&b, "3")] {
        let v = args(dir.path(), jobs);
        let out = nsope(&v.iter().map(String::as_str).collect::<Vec<_>>());
        assert!(out.status.code() == Some(0) || out.status.code() == Some(2));
    }
    let read = |d: &tempfile::TempDir| fs::read(d.path().join("results.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert!(a.path().join("summary.csv").exists() && a.path().join("config.toml").exists());
}
