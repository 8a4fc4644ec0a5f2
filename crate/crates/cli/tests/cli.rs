use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_multicruise"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn generate_overtake(dir: &Path) -> String {
    let file = dir.join("overtake.toml");
    let out = run(&["generate", "simple-overtake", "--out", file.to_str().unwrap()]);
    assert!(out.status.success());
    file.to_str().unwrap().to_string()
}

const ONE_LANE: &str = r#"
schema_version = 1

[[road.segments]]
length = 800.0
lanes = 1
speed_limit = 30.0

[ego]
lane = 0
v = VEGO
controller = "lane-following"

[[ambient.vehicles]]
id = 1
s = SLEAD
lane = 0
v = 0.0
desired_speed = 0.001
"#;

fn one_lane(dir: &Path, v_ego: f64, s_lead: f64) -> String {
    let file = dir.join("one_lane.toml");
    let text = ONE_LANE.replace("VEGO", &format!("{v_ego:.1}")).replace("SLEAD", &format!("{s_lead:.1}"));
    std::fs::write(&file, text).unwrap();
    file.to_str().unwrap().to_string()
}

#[test]
fn overtake_run_changes_lanes_twice() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = generate_overtake(dir.path());
    let out_dir = dir.path().join("mc");
    let out = run(&["run", "--scenario", &scenario, "--controller", "multi-cruise", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = json(&out_dir.join("summary.json"));
    assert_eq!(summary["lane_changes"], 2);
    assert_eq!(summary["status"], "completed");
    let csv = std::fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    assert!(csv.starts_with("time,s,lane,v,a,yaw,fuel_rate,C_LF,C_CF,C_RF,decision\n"));
}

#[test]
fn baseline_run_keeps_its_lane() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = generate_overtake(dir.path());
    let out_dir = dir.path().join("lf");
    let out = run(&["run", "--scenario", &scenario, "--controller", "lane-following", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out_dir.join("summary.json"))["lane_changes"], 0);
    let csv = std::fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[2], "1");
        assert_eq!(cols[5].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn malformed_file_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.toml");
    std::fs::write(&file, "schema_version = 1\n[[road.segments]]\nlength = 100.0\nlanes = 2\nspeed_limit = -4.0\n[ego]\nlane = 0\nv = 1.0\n").unwrap();
    let out = run(&["run", "--scenario", file.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("road.segments[0].speed_limit"), "{stderr}");

    std::fs::write(&file, "schema_version = ").unwrap();
    let out = run(&["run", "--scenario", file.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn collision_and_timeout_have_their_own_codes() {
    let dir = tempfile::tempdir().unwrap();
    let crash = one_lane(dir.path(), 30.0, 10.0);
    let out = run(&["run", "--scenario", &crash, "--out", dir.path().join("c").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stderr).contains("collision"));

    let stuck = one_lane(dir.path(), 0.0, 60.0);
    let out = run(&["run", "--scenario", &stuck, "--out", dir.path().join("t").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(json(&dir.path().join("t/summary.json"))["status"], "timeout");
}

#[test]
fn compare_on_empty_road_is_neutral() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("empty.toml");
    std::fs::write(&file, "schema_version = 1\n[[road.segments]]\nlength = 2000.0\nlanes = 3\nspeed_limit = 29.0\n[ego]\nlane = 1\nv = 29.0\n").unwrap();
    let out_dir = dir.path().join("cmp");
    let out = run(&["compare", "--scenario", file.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&out_dir.join("report.json"));
    assert!((report["relative_fuel"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    for sub in ["multi-cruise", "lane-following"] {
        assert!(out_dir.join(sub).join("trace.csv").exists());
    }
    let fuel = std::fs::read_to_string(out_dir.join("fuel_rate.csv")).unwrap();
    assert!(fuel.starts_with("time,fuel_rate_multicruise,fuel_rate_lane_following\n"));
}

#[test]
fn compare_report_is_consistent_in_heavy_traffic() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("heavy.toml");
    let out = run(&["generate", "highway", "--length-km", "3", "--density", "heavy", "--seed", "42", "--out", file.to_str().unwrap()]);
    assert!(out.status.success());
    let out_dir = dir.path().join("cmp");
    let out = run(&["compare", "--scenario", file.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out_dir.join("report.json"));
    let mc = r["multicruise"]["consumed_fuel_g"].as_f64().unwrap();
    let lf = r["lane_following"]["consumed_fuel_g"].as_f64().unwrap();
    assert_eq!(r["relative_fuel"].as_f64().unwrap(), mc / lf);
    assert_eq!(r["seed"], 42);
    assert_eq!(r["same_ambient"], true);
    for sub in ["multi-cruise", "lane-following"] {
        assert_eq!(json(&out_dir.join(sub).join("summary.json")), r[if sub == "multi-cruise" { "multicruise" } else { "lane_following" }]);
    }
}

#[test]
fn single_seed_batch_aggregate_is_its_row_and_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out_dir in [&a, &b] {
        let out = bin()
            .args(["batch", "--length-km", "2", "--density", "moderate", "--seeds", "1", "--out", out_dir.to_str().unwrap()])
            .env("MULTICRUISE_WORKERS", "2")
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let ra = json(&a.join("report.json"));
    assert_eq!(ra, json(&b.join("report.json")));
    let row = ra["rows"][0]["relative_fuel"].as_f64().unwrap();
    for key in ["mean_relative_fuel", "min_relative_fuel", "max_relative_fuel"] {
        assert_eq!(ra["aggregate"][key].as_f64().unwrap(), row);
    }
}

#[test]
fn seed_lists_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["batch", "--length-km", "1", "--seeds", "4,9", "--workers", "1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&dir.path().join("report.json"));
    let seeds: Vec<u64> = r["rows"].as_array().unwrap().iter().map(|x| x["seed"].as_u64().unwrap()).collect();
    assert_eq!(seeds, vec![4, 9]);
}
