use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rabi(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rabi-dpt"))
        .args(args)
        .current_dir(cwd)
        .env_remove("RABI_DPT_CACHE")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn rate_reports_kinks_of_decoupled_quench() {
    let dir = tempfile::tempdir().unwrap();
    let o = rabi(
        &["rate", "--g1", "1.5", "--g2", "0.0", "--eta", "100", "--tmax", "6.3", "--dt", "0.005", "--out", "r"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let kinks = json(&dir.path().join("r/kinks.json"));
    let times: Vec<f64> = kinks["critical_times"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(times.len(), 2);
    assert!((times[0] - PI / 2.0).abs() < 0.01 && (times[1] - 1.5 * PI).abs() < 0.01);
    let csv = fs::read_to_string(dir.path().join("r/rate.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,log_p_plus,log_p_minus,rate,r_infinity,r_finite_eta");
    assert_eq!(lines.count(), 1261);
    let meta = json(&dir.path().join("r/meta.json"));
    assert_eq!(meta["mode"], "rate");
    assert!(meta["cutoff"][0]["used"].as_u64().unwrap() > 0);
}

#[test]
fn phase_diagram_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = rabi(
        &["phase-diagram", "--g1-min", "1.05", "--g1-max", "3", "--steps", "40", "--out", "pd", "--gnuplot-script"],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("pd/phase_diagram.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "g1,g2c");
    assert_eq!(rows.len(), 42);
    let last: Vec<f64> = rows[41].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(last[0], 3.0);
    assert!((last[1] - 3.0 * 12.0 / 20.0).abs() < 1e-12);
    // 17 significant digits
    assert_eq!(rows[1].split(',').next().unwrap().split('e').next().unwrap().replace(['.', '-'], "").len(), 17);
    assert!(dir.path().join("pd/phase_diagram.gp").exists());
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&rabi(&["rate", "--g1", "1.5", "--out", "x"], dir.path())), 2);
    assert_eq!(code(&rabi(&["rate", "--g1", "1.5", "--g2", "0", "--eta", "-3", "--out", "x"], dir.path())), 2);
    assert_eq!(code(&rabi(&["no-such-mode"], dir.path())), 2);
    fs::write(dir.path().join("bad.json"), r#"{"g1": 1.5, "g2": 0.0, "etta": 100}"#).unwrap();
    let o = rabi(&["rate", "--config", "bad.json"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("etta"));
    fs::write(dir.path().join("mode.json"), r#"{"mode": "quench"}"#).unwrap();
    assert_eq!(code(&rabi(&["rate", "--config", "mode.json"], dir.path())), 2);
    assert_eq!(code(&rabi(&["cache", "list"], dir.path())), 2);
}

#[test]
fn numerical_failure_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = rabi(&["quench", "--g1", "1.5", "--g2", "1.4", "--eta", "100", "--cutoff", "20", "--out", "q"], dir.path());
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cutoff"));
}

#[test]
fn cache_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let list = |d: &Path| String::from_utf8(rabi(&["cache", "list", "--cache-dir", "c"], d).stdout).unwrap();
    assert_eq!(rabi(&["cache", "list", "--cache-dir", "c"], dir.path()).status.code(), Some(0));
    assert!(list(dir.path()).is_empty());
    let o =
        rabi(&["quench", "--g1", "1.5", "--g2", "0.9", "--eta", "20", "--cache-dir", "c", "--out", "q"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let listing = list(dir.path());
    assert!(listing.lines().any(|l| l.contains("g=0.9")), "{listing}");
    let stat: serde_json::Value =
        serde_json::from_slice(&rabi(&["cache", "stat", "--cache-dir", "c"], dir.path()).stdout).unwrap();
    assert!(stat["entries"].as_u64().unwrap() >= 1);
    let o = rabi(&["cache", "purge", "--cache-dir", "c", "--older-than", "1h"], dir.path());
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "removed 0 entries");
    assert_eq!(code(&rabi(&["cache", "purge", "--cache-dir", "c"], dir.path())), 0);
    assert!(list(dir.path()).is_empty());
}

#[test]
fn replay_is_bitwise_for_any_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let o = rabi(
        &[
            "quench",
            "--g1",
            "1.5",
            "--g2-list",
            "0.8,1.4",
            "--eta",
            "30",
            "--window-end",
            "200",
            "--series",
            "--threads",
            "1",
            "--out",
            "a",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = rabi(&["quench", "--config", "a/config.json", "--threads", "3", "--out", "b"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["sweep.csv", "series.csv", "config.json"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        if f == "config.json" {
            // only the output directory differs
            let (mut ja, mut jb): (serde_json::Value, serde_json::Value) =
                (serde_json::from_slice(&a).unwrap(), serde_json::from_slice(&b).unwrap());
            for j in [&mut ja, &mut jb] {
                j.as_object_mut().unwrap().remove("output_dir");
                j.as_object_mut().unwrap().remove("threads");
            }
            assert_eq!(ja, jb);
        } else {
            assert_eq!(a, b, "{f} differs");
        }
    }
    let meta = json(&dir.path().join("b/meta.json"));
    assert_eq!(meta["config"]["window"]["t_end"], 200.0);
}

#[test]
fn semiclassical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = rabi(
        &["semiclassical", "--g1", "1.5", "--g2", "1.4", "--tmax", "100", "--points", "500", "--out", "s"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let traj = fs::read_to_string(dir.path().join("s/trajectory.csv")).unwrap();
    assert!(traj.starts_with("t,x,p,sx,sy,sz,energy\n"));
    let sections = fs::read_to_string(dir.path().join("s/sections.csv")).unwrap();
    let rows: Vec<&str> = sections.lines().collect();
    assert_eq!(rows[0], "t,x,p,sx,sy");
    assert_eq!(rows.len(), 501);
    assert!(rows[1..].iter().all(|r| r.split(',').nth(3).unwrap().parse::<f64>().unwrap() > 0.0));
    let meta = json(&dir.path().join("s/meta.json"));
    assert!(meta["diagnostics"]["trajectory"]["sign_flip_time"].is_null());

    let run = |seed: &str, threads: &str, out: &str| {
        let o = rabi(
            &[
                "semiclassical",
                "--g1",
                "1.5",
                "--g2-list",
                "1.0",
                "--eta",
                "100",
                "--samples",
                "32",
                "--seed",
                seed,
                "--window-start",
                "10",
                "--window-end",
                "40",
                "--threads",
                threads,
                "--out",
                out,
            ],
            dir.path(),
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        json(&dir.path().join(out).join("ensemble.json"))
    };
    let a = run("5", "1", "e1");
    let b = run("5", "4", "e2");
    assert_eq!(a, b);
    assert_eq!(a["seed"], 5);
    assert_eq!(a["rows"][0]["n_samples"], 32);
}
