use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn riemstab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riemstab"))
        .args(args)
        .env("RIEMSTAB_LOG", "error")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.cfg");
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL_AC: &str = r#"
seed = 7

[chart]
preset = "flat_torus"

[grid]
resolution = 16

[nonlinearity]
name = "allen_cahn_scalar"
"#;

#[test]
fn empty_config_gives_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 1\n");
    let out = dir.path().join("out");
    let o = riemstab(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["experiments"].as_array().unwrap().len(), 0);
    assert_eq!(report["failures"].as_array().unwrap().len(), 0);
}

#[test]
fn unknown_metric_preset_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 1\n[chart]\npreset = \"klein_bottle\"\n");
    let o = riemstab(&["check-config", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("klein_bottle"), "{}", stderr(&o));
}

#[test]
fn unknown_key_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 1\n\nsede = 2\n");
    let o = riemstab(&[
        "run",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(msg.contains("sede") && msg.contains("line 3"), "{msg}");
}

#[test]
fn unknown_nonlinearity_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let body = SMALL_AC.replace("allen_cahn_scalar", "sine_gordon");
    let cfg = write_config(dir.path(), &body);
    let o = riemstab(&["check-config", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sine_gordon"), "{}", stderr(&o));
}

#[test]
fn check_config_counts_experiments() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        "{SMALL_AC}\n[[experiments]]\nkind = \"stability\"\ninitial = {{ kind = \"constant\", values = [1.0] }}\n\n\
         [[experiments]]\nkind = \"stability\"\ninitial = {{ kind = \"constant\", values = [0.0] }}\n"
    );
    let cfg = write_config(dir.path(), &body);
    let o = riemstab(&["check-config", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("2 experiment"));
}

#[test]
fn violation_exits_one_and_still_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        "{SMALL_AC}\n[[experiments]]\nkind = \"stability\"\nid = \"zero\"\n\
         initial = {{ kind = \"constant\", values = [0.0] }}\nexpect = \"stable\"\n\
         bumps = 0\ntrig = 0\npoincare = 0\n"
    );
    let cfg = write_config(dir.path(), &body);
    let out = dir.path().join("out");
    let o = riemstab(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stdout(&o).contains("violation"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["status"], "violation");
    assert!(out.join("zero.csv").exists());
    assert!(out.join("replay.toml").exists());
}

#[test]
fn failing_experiment_keeps_partial_results() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.bin");
    let body = format!(
        "{SMALL_AC}\n[[experiments]]\nkind = \"stability\"\nid = \"ok\"\n\
         initial = {{ kind = \"constant\", values = [1.0] }}\nbumps = 4\ntrig = 2\npoincare = 0\n\n\
         [[experiments]]\nkind = \"stability\"\nid = \"broken\"\n\
         initial = {{ kind = \"file\", paths = [{:?}] }}\n",
        missing.to_str().unwrap()
    );
    let cfg = write_config(dir.path(), &body);
    let out = dir.path().join("out");
    let o = riemstab(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["experiments"].as_array().unwrap().len(), 1);
    assert_eq!(report["failures"][0]["id"], "broken");
    assert!(out.join("ok.csv").exists());
}

#[test]
fn list_presets_builtin_and_custom() {
    let o = riemstab(&["list-presets"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    for name in ["flat_torus", "sphere", "bose", "allen_cahn_scalar"] {
        assert!(s.contains(name), "{name} missing from\n{s}");
    }

    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "seed = 1\n[[presets]]\nname = \"soft_bose\"\nbase = \"bose\"\nparams = { g = 0.25 }\n",
    );
    let o = riemstab(&["list-presets", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("soft_bose"));

    let o = riemstab(&["list-presets", "--no-builtins"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).trim().is_empty(), "{}", stdout(&o));

    let o = riemstab(&["list-presets", "--config", &cfg, "--no-builtins"]);
    let s = stdout(&o);
    assert!(s.contains("soft_bose") && !s.contains("flat_torus"), "{s}");
}

#[test]
fn replay_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        "{SMALL_AC}\n[[experiments]]\nkind = \"stability\"\n\
         initial = {{ kind = \"random\", seed = 3, amplitude = 0.2, mean = [0.8] }}\n\
         solve = \"flow_newton\"\nflow_time = 5.0\nbumps = 10\ntrig = 2\npoincare = 5\n"
    );
    let cfg = write_config(dir.path(), &body);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let o = riemstab(&[
        "run",
        "--config",
        &cfg,
        "--out",
        a.to_str().unwrap(),
        "--seed",
        "11",
    ]);
    assert!(o.status.code().is_some_and(|c| c <= 1), "{}", stderr(&o));
    let replay = a.join("replay.toml");
    let o = riemstab(&[
        "run",
        "--config",
        replay.to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
    ]);
    assert!(o.status.code().is_some_and(|c| c <= 1), "{}", stderr(&o));
    for f in ["report.json", "stability.csv", "replay.toml"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn zero_jobs_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 1\n");
    let o = riemstab(&[
        "run",
        "--config",
        &cfg,
        "--jobs",
        "0",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn shipped_config_runs_clean() {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/torus_bose.cfg");
    let dir = tempfile::tempdir().unwrap();
    let o = riemstab(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let kinds: Vec<&str> = report["experiments"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["kind"].as_str().unwrap())
        .collect();
    assert_eq!(kinds, ["liouville_compact", "stability", "stability"]);
    assert_eq!(report["experiments"][0]["summary"]["stable_nonconstant"], 0);
}
