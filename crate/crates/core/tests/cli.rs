use std::path::Path;
use std::process::{Command, Output};

use tristim::io::{read_matrix, read_measurements};

fn tristim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tristim"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = tristim(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn simulate_one_panel_cardinality() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--panels", "1", "--repeats", "12", "--out", "m.csv"]);
    let records = read_measurements(&dir.path().join("m.csv")).unwrap();
    assert_eq!(records.len(), 12 * 20);
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["--seed", "9", "simulate", "--panels", "2", "--repeats", "3", "-o", "a.csv"]);
    ok(p, &["--seed", "9", "simulate", "--panels", "2", "--repeats", "3", "-o", "b.csv"]);
    ok(p, &["--seed", "10", "simulate", "--panels", "2", "--repeats", "3", "-o", "c.csv"]);
    let read = |f: &str| std::fs::read(p.join(f)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_ne!(read("a.csv"), read("c.csv"));
}

#[test]
fn three_color_calibration_ignores_weighting() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["simulate", "--panels", "2", "--repeats", "4", "-o", "m.csv"]);
    let base = ["calibrate", "-i", "m.csv", "--colors", "red,green,blue"];
    ok(p, &[&base[..], &["--weighting", "proposed", "-o", "p.toml"]].concat());
    ok(p, &[&base[..], &["--weighting", "uniform", "-o", "u.toml"]].concat());
    let proposed = read_matrix(&p.join("p.toml")).unwrap();
    let uniform = read_matrix(&p.join("u.toml")).unwrap();
    assert_eq!(proposed.matrix, uniform.matrix);
    assert_eq!(proposed.fit_colors, ["red", "green", "blue"]);
    assert_eq!(proposed.source_panel.as_deref(), Some("P01"));
    assert_eq!(proposed.reference_panel.as_deref(), Some("P02"));
}

#[test]
fn pipeline_fit_calibrate_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["simulate", "--panels", "4", "--repeats", "6", "-o", "m.csv"]);
    ok(p, &["fit-noise", "-i", "m.csv", "--scope", "between", "-o", "model.toml"]);
    let model = std::fs::read_to_string(p.join("model.toml")).unwrap();
    assert!(model.starts_with("format_version = 1\n"));
    ok(p, &["calibrate", "-i", "m.csv", "--model", "model.toml", "-o", "cal.toml"]);
    let single = ok(p, &["evaluate", "-i", "m.csv", "--matrix", "cal.toml", "--reference", "P02"]);
    assert!(single.contains("cyan") && single.contains("mean"));

    let table = ok(p, &["evaluate", "-i", "m.csv", "-o", "cmp.csv"]);
    assert!(table.contains("| P04 |"));
    let csv = std::fs::read_to_string(p.join("cmp.csv")).unwrap();
    assert!(csv.starts_with("source_panel,reference_panel,weighting,mean_abs_error,cyan,magenta,yellow\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
}

#[test]
fn analyze_and_report_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["simulate", "--panels", "3", "--repeats", "4", "-o", "m.csv"]);
    let listing = ok(p, &["analyze", "-i", "m.csv", "-o", "out", "--no-svg"]);
    assert!(listing.contains("k_table.csv"));
    assert!(!p.join("out/within_panel_std.svg").exists());

    ok(p, &["--seed", "5", "report", "--panels", "3", "--repeats", "4", "-o", "rep"]);
    let summary = std::fs::read_to_string(p.join("rep/summary.md")).unwrap();
    assert!(summary.contains("- seed: 5"));
    assert!(summary.contains("config hash: `"));
    for f in ["measurements.csv", "within_model.toml", "calibration_comparison.csv", "delta_e_histograms.svg"] {
        assert!(p.join("rep").join(f).exists(), "{f}");
    }
}

#[test]
fn config_file_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(
        p.join("s.toml"),
        "seed = 3\n[campaign]\npanels = 2\nrepeats = 2\nbrightness = [0.5, 1.0]\n",
    )
    .unwrap();
    ok(p, &["--config", "s.toml", "simulate", "-o", "m.csv"]);
    assert_eq!(read_measurements(&p.join("m.csv")).unwrap().len(), 2 * 2 * 2 * 20);
}

#[test]
fn exit_codes_by_failure_class() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let code = |args: &[&str]| tristim(p, args).status.code().unwrap();

    assert_eq!(code(&["analyze", "-i", "missing.csv", "-o", "x"]), 1);

    std::fs::write(p.join("bad.csv"), "panel_id,color_id\n").unwrap();
    assert_eq!(code(&["analyze", "-i", "bad.csv", "-o", "x"]), 2);
    std::fs::write(p.join("broken.toml"), "seed = \"x\"\n").unwrap();
    assert_eq!(code(&["--config", "broken.toml", "simulate", "-o", "m.csv"]), 2);

    assert_eq!(code(&["simulate", "--panels", "0", "-o", "m.csv"]), 3);
    let neg = "panel_id,color_id,brightness,repeat_index,timestamp,X,Y,Z\nP1,white,1,0,,-1,1,1\n";
    std::fs::write(p.join("neg.csv"), neg).unwrap();
    assert_eq!(code(&["analyze", "-i", "neg.csv", "-o", "x"]), 3);

    let mut rows = String::from("panel_id,color_id,brightness,repeat_index,timestamp,X,Y,Z\n");
    for panel in ["A", "B"] {
        for (color, xyz) in [("red", "1,2,3"), ("green", "2,4,6"), ("blue", "3,6,9"), ("white", "4,8,12")] {
            rows.push_str(&format!("{panel},{color},1,0,,{xyz}\n"));
        }
    }
    std::fs::write(p.join("collinear.csv"), rows).unwrap();
    let out = tristim(p, &["calibrate", "-i", "collinear.csv", "-o", "c.toml"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[numerical]"));
}
