mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{bless, data_path};
use drillguide::dataset::read_records;
use drillguide::widget::{classify_area, Channel, RenderFrame, WidgetConfig};
use serde_json::Value;
use tempfile::TempDir;

fn drillguide(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drillguide")).args(args).env_remove("DRILLGUIDE_SEED").output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Asserts a failed run with one `error: <code>: ...` line on stderr.
fn assert_error(o: &Output, exit: i32, code: &str) -> String {
    let err = stderr(o);
    assert_eq!(o.status.code(), Some(exit), "stderr: {err}");
    assert_eq!(err.lines().count(), 1, "stderr: {err}");
    assert!(err.starts_with(&format!("error: {code}: ")), "stderr: {err}");
    err
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.json");
    std::fs::write(&path, r#"{"n_subjects": 3, "trials_per_condition": 3}"#).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn default_simulation_matches_the_study_size_and_is_worker_independent() {
    let tmp = TempDir::new().unwrap();
    let (one, eight) = (tmp.path().join("w1"), tmp.path().join("w8"));
    for (dir, workers) in [(&one, "1"), (&eight, "8")] {
        let o = drillguide(&["simulate", "--out", s(dir), "--seed", "42", "--workers", workers]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = std::fs::read(one.join("dataset.csv")).unwrap();
    let b = std::fs::read(eight.join("dataset.csv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 2240 + 1);
    assert_eq!(std::fs::read(one.join("config.json")).unwrap(), std::fs::read(eight.join("config.json")).unwrap());

    let out = tmp.path().join("report");
    let o = drillguide(&["analyze", "--data", s(&one), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let metrics = report["metrics"].as_array().unwrap();
    let names: Vec<&str> = metrics.iter().map(|m| m["metric"].as_str().unwrap()).collect();
    assert_eq!(names, ["PM", "PX", "PY", "PZ", "RM", "RX", "RZ", "TT"]);
    for m in metrics {
        assert!(m["friedman"]["p_value"].is_number(), "{}", m["metric"]);
        assert_eq!(m["posthoc"].as_array().unwrap().len(), 6);
        assert!(out.join(format!("box_{}.svg", m["metric"].as_str().unwrap())).exists());
    }
    for f in ["report.txt", "radar.csv", "radar.svg"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn seed_falls_back_to_the_environment() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let flag = tmp.path().join("flag");
    let env = tmp.path().join("env");
    assert!(drillguide(&["simulate", "--config", &cfg, "--out", s(&flag), "--seed", "9"]).status.success());
    let o = Command::new(env!("CARGO_BIN_EXE_drillguide"))
        .args(["simulate", "--config", &cfg, "--out", s(&env)])
        .env("DRILLGUIDE_SEED", "9")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(flag.join("dataset.csv")).unwrap(), std::fs::read(env.join("dataset.csv")).unwrap());
}

#[test]
fn config_problems_exit_two() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nope.json");
    let o = drillguide(&["simulate", "--config", s(&missing), "--out", s(tmp.path())]);
    let err = assert_error(&o, 2, "config");
    assert!(err.contains(s(&missing)), "{err}");

    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"widget": {"tt_pos": 200}}"#).unwrap();
    let err = assert_error(&drillguide(&["validate-config", s(&bad)]), 2, "config");
    assert!(err.contains("widget.tt_pos"), "{err}");

    std::fs::write(&bad, r#"{"n_subject": 3}"#).unwrap();
    let err = assert_error(&drillguide(&["simulate", "--config", s(&bad), "--out", s(tmp.path())]), 2, "config");
    assert!(err.contains("n_subject"), "{err}");

    let good = small_config(tmp.path());
    let o = drillguide(&["validate-config", &good]);
    assert!(o.status.success());
    let effective: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(effective["n_subjects"], 3);
    assert_eq!(effective["widget"]["mt_pos"], 100.0);

    assert_error(&drillguide(&["simulate"]), 2, "usage");
}

#[test]
fn analyze_rejects_bad_data() {
    let tmp = TempDir::new().unwrap();
    let header = std::fs::read_to_string(data_path("golden/dataset.csv")).unwrap();
    let empty = tmp.path().join("empty.csv");
    std::fs::write(&empty, header.lines().next().unwrap().to_owned() + "\n").unwrap();
    let err = assert_error(&drillguide(&["analyze", "--data", s(&empty), "--out", s(tmp.path())]), 2, "no_trials");
    assert!(err.contains("no trials"));

    let mut lines: Vec<String> = header.lines().map(str::to_owned).collect();
    lines[5] = lines[5].replacen(",false,", ",maybe,", 1);
    let broken = tmp.path().join("broken.csv");
    std::fs::write(&broken, lines.join("\n") + "\n").unwrap();
    let err = assert_error(&drillguide(&["analyze", "--data", s(&broken), "--out", s(tmp.path())]), 2, "schema");
    assert!(err.contains("row 6") && err.contains("timed_out"), "{err}");

    let renamed = tmp.path().join("renamed.csv");
    std::fs::write(&renamed, header.replacen("rm,", "rmag,", 1)).unwrap();
    let err = assert_error(&drillguide(&["analyze", "--data", s(&renamed), "--out", s(tmp.path())]), 2, "schema");
    assert!(err.contains("rm"), "{err}");
}

#[test]
fn golden_report_is_byte_stable() {
    let tmp = TempDir::new().unwrap();
    let o = drillguide(&["analyze", "--data", s(&data_path("golden")), "--out", s(tmp.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["report.json", "radar.csv"] {
        let produced = std::fs::read_to_string(tmp.path().join(name)).unwrap();
        let golden = data_path("golden").join(format!("expected_{name}"));
        if bless() {
            std::fs::write(&golden, &produced).unwrap();
            continue;
        }
        assert_eq!(produced, std::fs::read_to_string(&golden).unwrap(), "{name} drifted");
    }
}

#[test]
fn replay_reproduces_recorded_trials() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let data = tmp.path().join("sim");
    assert!(drillguide(&["simulate", "--config", &cfg, "--out", s(&data)]).status.success());
    let records = read_records(&data.join("dataset.csv")).unwrap();
    let widget = WidgetConfig::default();

    for subject in 0..3u32 {
        let own: Vec<_> = records.iter().filter(|r| r.subject == subject).collect();
        for index in [0usize, 4, 11] {
            let rec = own[index];
            let args = ["replay", "--data", s(&data), "--subject", &subject.to_string(), "--trial", &index.to_string()];
            let first = drillguide(&args);
            assert!(first.status.success(), "{}", stderr(&first));
            assert_eq!(first.stdout, drillguide(&args).stdout);

            let frames: Vec<RenderFrame> =
                String::from_utf8(first.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
            let expected = rec.task_time * 60.0;
            assert!((frames.len() as f64 - expected).abs() <= 1.0, "{} frames for {} s", frames.len(), rec.task_time);
            let last = frames.last().unwrap();
            assert_eq!(last.condition, rec.condition);
            // the tool does not move on the pedal frame, so the last frame shows the recorded error
            for duo in &last.duos {
                let (tt, mt) = widget.thresholds(duo.channel);
                let component = match duo.channel {
                    Channel::PX => rec.error.pe_vec.x,
                    Channel::PY => rec.error.pe_vec.y,
                    Channel::PZ => rec.error.pe_vec.z,
                    Channel::RX => rec.error.re_x,
                    Channel::RZ => rec.error.re_z,
                };
                assert_eq!(duo.area, classify_area(component.abs(), tt, mt), "{:?}", duo.channel);
            }
        }
    }

    let err = assert_error(
        &drillguide(&["replay", "--data", s(&data), "--subject", "0", "--trial", "12"]),
        2,
        "unknown_trial",
    );
    assert!(err.contains("trial 12"));
    assert_error(&drillguide(&["replay", "--data", s(&data), "--subject", "7", "--trial", "0"]), 2, "unknown_trial");

    let csv = std::fs::read_to_string(data.join("dataset.csv")).unwrap();
    let mut lines: Vec<&str> = csv.lines().collect();
    let tampered = lines[1].replacen(",false,", ",true,", 1);
    lines[1] = &tampered;
    std::fs::write(data.join("dataset.csv"), lines.join("\n") + "\n").unwrap();
    assert_error(&drillguide(&["replay", "--data", s(&data), "--subject", "0", "--trial", "0"]), 1, "replay_mismatch");
}
