use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ankle_cli::report::{read_report, Comparison};
use serde_json::Value;

fn ankle(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ankle"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(cwd: &Path, args: &[&str]) -> Output {
    let o = ankle(cwd, args);
    assert!(o.status.success(), "ankle {args:?}: {}", stderr(&o));
    o
}

/// A short trial with two Lyapunov windows keeps the full pipeline quick.
const QUICK: &str = r#"
[trial]
n_strides = 176
excluded_strides = 25

[analysis.lyapunov]
n_windows = 2
"#;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn simulate_quick(dir: &Path, out: &str, extra: &str) {
    write(dir, "quick.toml", &format!("{QUICK}{extra}"));
    ok(dir, &["simulate", "--config", "quick.toml", "--out", out]);
}

#[test]
fn default_simulation_has_every_channel() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["simulate", "--out", "t"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("manifest.json"));
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("t/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["rate"], 100.0);
    assert_eq!(manifest["spec"]["n_strides"], 200);
    for ch in ["markers", "cop", "prosthesis", "events"] {
        let file = manifest["channels"][ch].as_str().unwrap();
        assert!(dir.path().join("t").join(file).is_file(), "{ch}");
    }
    let events = std::fs::read_to_string(dir.path().join("t/events.csv")).unwrap();
    assert!(events.lines().filter(|l| l.starts_with("left,")).count() >= 200);
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    simulate_quick(dir.path(), "a", "");
    simulate_quick(dir.path(), "b", "");
    for f in ["markers.csv", "cop.csv", "prosthesis.csv", "events.csv", "manifest.json"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
    ok(dir.path(), &["simulate", "--config", "quick.toml", "--seed", "99", "--out", "c"]);
    assert_ne!(
        std::fs::read(dir.path().join("a/markers.csv")).unwrap(),
        std::fs::read(dir.path().join("c/markers.csv")).unwrap()
    );
}

#[test]
fn admittance_without_stiffness_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.toml", "[trial]\ncontroller = \"AC\"\nk_d = 0.0\n");
    let o = ankle(dir.path(), &["simulate", "--config", "bad.toml"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("k_d"));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ankle(dir.path(), &["simulate", "--bogus"]).status.code(), Some(1));
    assert_eq!(ankle(dir.path(), &[]).status.code(), Some(1));
    assert_eq!(ankle(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn unwritable_output_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "blocker", "a file, not a directory");
    let o = ankle(dir.path(), &["simulate", "--out", "blocker/trial"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn corrupted_row_names_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    simulate_quick(dir.path(), "t", "");
    let path = dir.path().join("t/cop.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[41] = lines[41].replacen(',', ",not-a-number,", 1);
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    let o = ankle(dir.path(), &["analyze", "t/manifest.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("cop.csv:42"), "{}", stderr(&o));
}

#[test]
fn missing_channel_is_named() {
    let dir = tempfile::tempdir().unwrap();
    simulate_quick(dir.path(), "t", "");
    let manifest = dir.path().join("t/manifest.json");
    let original = std::fs::read_to_string(&manifest).unwrap();
    let mut m: Value = serde_json::from_str(&original).unwrap();
    m["channels"].as_object_mut().unwrap().remove("events");
    std::fs::write(&manifest, serde_json::to_string(&m).unwrap()).unwrap();
    let o = ankle(dir.path(), &["analyze", "t/manifest.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("events"), "{}", stderr(&o));

    std::fs::write(&manifest, original).unwrap();
    std::fs::remove_file(dir.path().join("t/prosthesis.csv")).unwrap();
    let o = ankle(dir.path(), &["analyze", "t/manifest.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("prosthesis"), "{}", stderr(&o));
}

#[test]
fn reanalysis_reproduces_report_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    simulate_quick(dir.path(), "t", "");
    ok(dir.path(), &["analyze", "--config", "quick.toml", "--out", "r1", "t/manifest.json"]);
    ok(dir.path(), &["analyze", "--config", "quick.toml", "--out", "r2", "t/manifest.json"]);
    for f in ["report.json", "divergence.csv", "phase_portrait.csv", "moment_angle.csv", "stiffness_profile.csv"] {
        let a = std::fs::read(dir.path().join("r1").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("r2").join(f)).unwrap();
        assert!(!a.is_empty() && a == b, "{f}");
    }
    let report = read_report(&dir.path().join("r1/report.json")).unwrap();
    assert_eq!(report.report.excluded_strides, 25);
    assert_eq!(report.report.lyapunov.len(), 3);
    assert!(report.report.lyapunov.iter().all(|a| a.n_windows == 2));
    let divergence = std::fs::read_to_string(dir.path().join("r1/divergence.csv")).unwrap();
    assert_eq!(divergence.lines().next().unwrap(), "stride,ML_ln_divergence,AP_ln_divergence,VT_ln_divergence");
}

#[test]
fn boundary_trial_gives_single_window_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    // 175 generated strides minus 25 excluded leaves exactly 150 strides.
    write(dir.path(), "full.toml", "[trial]\nn_strides = 175\n");
    ok(dir.path(), &["simulate", "--config", "full.toml", "--out", "t"]);
    let o = ok(dir.path(), &["analyze", "--config", "full.toml", "t/manifest.json"]);
    assert!(stderr(&o).contains("warning"), "{}", stderr(&o));
    let report = read_report(&dir.path().join("t/report.json")).unwrap();
    assert_eq!(report.report.strides_analyzed, 150);
    assert!(report.report.lyapunov.iter().all(|a| a.n_windows == 1 && a.lambda_s_windows.len() == 1));
    assert_eq!(report.report.warnings.len(), 1);
}

#[test]
fn comparing_a_report_with_itself_is_neutral() {
    let dir = tempfile::tempdir().unwrap();
    simulate_quick(dir.path(), "t", "");
    ok(dir.path(), &["analyze", "--config", "quick.toml", "t/manifest.json"]);
    ok(dir.path(), &["compare", "--baseline", "t/report.json", "t/report.json"]);
    let cmp: Comparison =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("t/comparison.json")).unwrap()).unwrap();
    let c = &cmp.candidates[0];
    for a in &c.lyapunov {
        assert_eq!(a.lambda_s.delta, 0.0);
        assert_eq!(a.lambda_l.delta, 0.0);
        assert!(!a.lambda_s.significant && !a.lambda_l.significant && !a.lambda_s.improved);
    }
    assert_eq!(c.mos.len(), 4);
    assert!(c.mos.iter().all(|m| m.difference == Some(0.0) && !m.significant));
    assert!(dir.path().join("t/comparison.md").is_file());
}

#[test]
fn candidate_missing_a_side_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    simulate_quick(dir.path(), "t", "");
    ok(dir.path(), &["analyze", "--config", "quick.toml", "t/manifest.json"]);
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("t/report.json")).unwrap()).unwrap();
    v["report"]["mos"].as_object_mut().unwrap().remove("right_ml");
    write(dir.path(), "broken.json", &serde_json::to_string(&v).unwrap());
    let o = ankle(dir.path(), &["compare", "--baseline", "t/report.json", "--out", "cmp", "broken.json"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("broken.json"), "{}", stderr(&o));

    let missing = ankle(dir.path(), &["compare", "--baseline", "t/report.json", "nowhere.json"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn divergence_difference_has_the_injected_sign() {
    // Marker noise floods the differentiated CoM velocity with broadband
    // noise, so nearby trajectories start as far apart as the attractor is
    // wide and the short-term exponent collapses.
    let dir = tempfile::tempdir().unwrap();
    simulate_quick(dir.path(), "tc", "");
    simulate_quick(dir.path(), "noisy", "\n[trial.variability]\nmarker_noise = 1.0\n");
    for t in ["tc", "noisy"] {
        ok(dir.path(), &["analyze", "--config", "quick.toml", &format!("{t}/manifest.json")]);
    }
    ok(dir.path(), &["compare", "--baseline", "tc/report.json", "--out", "cmp", "noisy/report.json"]);
    let cmp: Comparison =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("cmp/comparison.json")).unwrap()).unwrap();
    for a in &cmp.candidates[0].lyapunov {
        let d = &a.lambda_s;
        assert!(d.delta < 0.0 && d.improved, "{:?}: {d:?}", a.axis);
        assert!((d.delta - (d.candidate.mean - d.baseline.mean)).abs() < 1e-8);
    }
}
