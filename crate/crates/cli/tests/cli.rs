use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hrflab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hrflab")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const FLAT: &str = r#"
seed = 11
suites = ["flow", "monitors"]

[grid]
n = 2
resolution = 16
boundary = "periodic"

[metric]
kind = "flat"

[flow]
t_end = 0.001
snapshots = 3
"#;

const POINCARE: &str = r#"
suites = ["flow", "monitors"]

[grid]
n = 1
resolution = 32
boundary = "frozen"

[metric]
kind = "poincare"
center = [0.5, 0.5]
radius = 1.0

[flow]
t_end = 0.02
exact_boundary = true
snapshots = 4
"#;

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn resolution_four_is_rejected_by_name() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &FLAT.replace("resolution = 16", "resolution = 4"));
    let out = tmp.path().join("out");
    let o = hrflab(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("grid.resolution = 4: must be at least 8"), "{}", stderr(&o));
    assert!(!out.exists());

    let cfg = write_config(tmp.path(), "c.toml", FLAT);
    let o = hrflab(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--resolution-override", "4"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_keys_are_reported_with_their_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &FLAT.replace("snapshots = 3", "snapshots = 3\nstep_size = 0.1"));
    let o = hrflab(&["run", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("step_size") && e.contains("line"), "{e}");
}

#[test]
fn flat_run_summarises_to_zero_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", FLAT);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let o = hrflab(&["run", "--config", &cfg, "--out", dir.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let summary = fs::read_to_string(a.join("summary.txt")).unwrap();
    assert!(summary.contains("all diagnostics zero"), "{summary}");
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for name in names {
        let (pa, pb) = (a.join(&name), b.join(&name));
        if pa.is_dir() {
            for e in fs::read_dir(&pa).unwrap() {
                let f = e.unwrap().file_name();
                assert_eq!(fs::read(pa.join(&f)).unwrap(), fs::read(pb.join(&f)).unwrap(), "{f:?}");
            }
        } else {
            assert_eq!(fs::read(&pa).unwrap(), fs::read(&pb).unwrap(), "{name:?} differs");
        }
    }
    let manifest = fs::read_to_string(a.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 11"), "{manifest}");

    let c = tmp.path().join("c");
    hrflab(&["run", "--config", &cfg, "--out", c.to_str().unwrap(), "--seed", "99"]);
    assert!(fs::read_to_string(c.join("manifest.json")).unwrap().contains("\"seed\": 99"));
}

#[test]
fn flat_identities_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let text = FLAT.replace("n = 2", "n = 1").replace("[\"flow\", \"monitors\"]", "[\"identities\"]");
    let cfg = write_config(tmp.path(), "c.toml", &text);
    let out = tmp.path().join("o");
    let o = hrflab(&["verify", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert_eq!(summary.matches("PASS identities").count(), 5, "{summary}");
    assert!(!summary.contains("FAIL"));
}

#[test]
fn poincare_run_reports_lambda_and_order() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", POINCARE);
    let out = tmp.path().join("o");
    let o = hrflab(&["monitor", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("oracle.csv").is_file());
    let s: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let oracle = &s["sections"]["oracle"];
    let (lo, hi) = (oracle["lambda_lo"].as_f64().unwrap(), oracle["lambda_hi"].as_f64().unwrap());
    assert!((lo - 2.0).abs() < 0.02 && (hi - 2.0).abs() < 0.02, "{oracle}");
    let order = oracle["order"].as_f64().unwrap();
    assert!((3.0..5.0).contains(&order), "{oracle}");
    // the order is recomputed from the CSV cells
    let csv = fs::read_to_string(out.join("oracle.csv")).unwrap();
    let errs: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(5).unwrap().parse().unwrap()).collect();
    assert_eq!(order, (errs[0] / errs[1]).ln() / 2f64.ln());
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    for m in ["shi_m1", "preserved_ricci", "pinching", "quasi_negative"] {
        assert!(summary.contains(&format!("PASS monitor {m}")), "{summary}");
    }
}

#[test]
fn report_on_empty_dir_lists_expected_files() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hrflab(&["report", tmp.path().to_str().unwrap()]);
    assert_ne!(o.status.code(), Some(0));
    let e = stderr(&o);
    for f in ["manifest.json", "diagnostics.csv", "monitors.csv", "oracle.csv", "exhaustion.csv"] {
        assert!(e.contains(f), "{e}");
    }
}

#[test]
fn report_lists_missing_and_corrupt_artifacts_and_keeps_the_rest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", FLAT);
    let out = tmp.path().join("o");
    hrflab(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    fs::remove_file(out.join("monitors.json")).unwrap();
    let o = hrflab(&["report", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(s.contains("missing: monitors.json"), "{s}");
    assert!(s.contains("all diagnostics zero"), "{s}");

    fs::write(out.join("diagnostics.csv"), "step,t\n1,2\n").unwrap();
    hrflab(&["report", out.to_str().unwrap()]);
    let s = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(s.contains("flow: unreadable"), "{s}");
}

#[test]
fn guard_breach_exits_nonzero_and_keeps_partial_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &FLAT.replace("snapshots = 3", "snapshots = 3\ndt = 0.01"));
    let out = tmp.path().join("o");
    let o = hrflab(&["monitor", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let flow = fs::read_to_string(out.join("flow.json")).unwrap();
    assert!(flow.contains("\"reason\": \"cfl\""), "{flow}");
    assert!(out.join("diagnostics.csv").is_file() && out.join("snapshots/snap_0000.hrf").is_file());
}

#[test]
fn exhaustion_reports_thresholds() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &format!("{FLAT}\n[exhaustion]\nsamples = 500\n"));
    let out = tmp.path().join("o");
    let o = hrflab(&["exhaustion", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert_eq!(s.matches("PASS exhaustion").count(), 2, "{s}");
    assert!(out.join("exhaustion_profile_0.csv").is_file());
}
