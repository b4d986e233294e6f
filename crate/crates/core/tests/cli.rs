use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn ecotruck(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecotruck")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn short_config(dir: &Path, name: &str, length_km: f64) -> PathBuf {
    let p = dir.join(format!("{name}.toml"));
    std::fs::write(&p, format!("name = \"{name}\"\n[road.synthetic]\nlength_km = {length_km}\n")).unwrap();
    p
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn mpc_writes_trajectory_summary_and_aging() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = short_config(tmp.path(), "short", 4.0);
    let out = tmp.path().join("out");
    let o = ecotruck(&["--config", path(&cfg), "--out-dir", path(&out), "mpc"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "segment_index,x_mps,t_s,soc_delta");
    // 4 km of 50 m segments: 80 segments, 81 boundaries.
    assert_eq!(lines.len(), 1 + 81);
    assert!(lines[81].starts_with("80,") && lines[81].ends_with(",,"));

    let s = json(&out.join("summary.json"));
    for k in ["fingerprint", "scenario", "seed", "road", "tau_s", "metrics"] {
        assert!(s.get(k).is_some(), "summary.json lacks {k}");
    }
    let m = &s["metrics"];
    assert_eq!(m["controller"], "admm_mpc");
    assert_eq!(m["fallbacks"], 0);
    let t = m["trip_time_s"].as_f64().unwrap();
    assert!((t - s["tau_s"].as_f64().unwrap()).abs() < 1e-3 * t);

    let a = json(&out.join("aging.json"));
    assert!(a["controllers"].as_array().is_some_and(|c| !c.is_empty()));
    assert!(!out.join("timing.json").exists());
}

#[test]
fn timing_is_opt_in() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = short_config(tmp.path(), "short", 2.0);
    let out = tmp.path().join("out");
    let o = ecotruck(&["--config", path(&cfg), "--out-dir", path(&out), "--timing", "mpc", "--controller", "cc"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(out.join("timing.json").exists());
    assert_eq!(json(&out.join("summary.json"))["metrics"]["controller"], "cc");
}

#[test]
fn optimize_reports_oracle_gap() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ecotruck(&["--out-dir", path(tmp.path()), "optimize", "--segments", "4", "--oracle"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    for k in ["admm energy:", "oracle energy:", "gap:"] {
        assert!(text.contains(k), "missing {k:?} in {text}");
    }
    let too_long = ecotruck(&["--out-dir", path(tmp.path()), "optimize", "--segments", "7", "--oracle"]);
    assert_eq!(too_long.status.code(), Some(1));
}

#[test]
fn compare_accepts_matching_summaries_and_refuses_others() {
    let tmp = tempfile::tempdir().unwrap();
    let a = short_config(tmp.path(), "a", 2.0);
    let b = short_config(tmp.path(), "b", 3.0);
    let run = |cfg: &Path, dir: &str, ctl: &str| {
        let out = tmp.path().join(dir);
        let o = ecotruck(&["--config", path(cfg), "--out-dir", path(&out), "mpc", "--controller", ctl]);
        assert_eq!(o.status.code(), Some(0));
        out.join("summary.json")
    };
    let admm = run(&a, "admm", "admm-mpc");
    let cc = run(&a, "cc", "cc");
    let other = run(&b, "other", "cc");

    let out = tmp.path().join("cmp");
    let o = ecotruck(&["--out-dir", path(&out), "compare", path(&admm), path(&cc)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&out.join("comparison.json"));
    for k in ["energy_pct", "trip_time_pct", "throughput_pct"] {
        assert!(r["deltas"][k].is_number(), "deltas lack {k}");
    }

    let o = ecotruck(&["--out-dir", path(&out), "compare", path(&admm), path(&other)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
}

#[test]
fn compare_runs_the_scenario_and_writes_series() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = short_config(tmp.path(), "short", 3.0);
    let out = tmp.path().join("out");
    let o = ecotruck(&["--config", path(&cfg), "--out-dir", path(&out), "compare"]);
    assert_eq!(o.status.code(), Some(0));
    let r = json(&out.join("comparison.json"));
    assert!(r["deltas"]["trip_time_pct"].as_f64().unwrap().abs() <= 0.1);
    let series = std::fs::read_to_string(out.join("series.csv")).unwrap();
    assert_eq!(series.lines().count(), 1 + 61);
}

#[test]
fn generators_write_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ecotruck(&["--out-dir", path(tmp.path()), "--seed", "4", "traffic-gen", "--preset", "light", "--segments", "100"]);
    assert_eq!(o.status.code(), Some(0));
    let traffic = std::fs::read_to_string(tmp.path().join("traffic.csv")).unwrap();
    assert_eq!(traffic.lines().count(), 101);

    let o = ecotruck(&["--out-dir", path(tmp.path()), "synth-road", "--length-km", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let road = std::fs::read_to_string(tmp.path().join("road.csv")).unwrap();
    assert_eq!(road.lines().count(), 1 + 41);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(ecotruck(&["frobnicate"]).status.code(), Some(1));
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "name = \"x\"\nno_such_key = 1\n").unwrap();
    assert_eq!(ecotruck(&["--config", path(&bad), "mpc"]).status.code(), Some(1));
    assert_eq!(ecotruck(&["--config", "/nonexistent.toml", "mpc"]).status.code(), Some(1));
}

#[test]
fn infeasible_trip_time_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("fast.toml");
    std::fs::write(&p, "name = \"fast\"\n[time]\ntau_s = 10.0\n[road.synthetic]\nlength_km = 2.0\n").unwrap();
    let o = ecotruck(&["--config", path(&p), "--out-dir", path(tmp.path()), "mpc"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}
