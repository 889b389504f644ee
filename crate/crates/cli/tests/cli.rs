use std::path::Path;
use std::process::{Command, Output};

use attrition_cli::table::ensemble_from_csv;
use attrition_core::ModelSpec;

fn attrition(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_attrition"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = attrition(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    let out = attrition(dir, args);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.lines().count(), 1, "one-line diagnostic expected: {stderr}");
    out.status.code().unwrap()
}

#[test]
fn simulate_defaults_emit_six_runs_of_eleven_states() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate"]);
    let text = read(dir.path(), "ensemble.csv");
    assert_eq!(text.lines().count(), 1 + 66);
    let e = ensemble_from_csv(&ModelSpec::janus5(), &text).unwrap();
    assert_eq!(e.runs.len(), 6);
    assert!(e.runs.iter().all(|r| r.states.len() == 11));
}

#[test]
fn noiseless_single_run_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(a.path(), &["simulate", "--runs", "1", "--noise", "0"]);
    ok(b.path(), &["simulate", "--runs", "1", "--noise", "0", "--seed", "77"]);
    assert_eq!(read(a.path(), "ensemble.csv"), read(b.path(), "ensemble.csv"));
}

#[test]
fn svg_has_a_polyline_and_label_per_unit() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--svg"]);
    let svg = read(dir.path(), "ensemble.svg");
    assert_eq!(svg.matches("<polyline").count(), 5);
    for name in ["RT", "RBMP", "BT", "BAPC", "BTOW"] {
        assert!(svg.contains(&format!(">{name}</text>")));
    }
    assert_eq!(svg.matches(r#"class="tick""#).count(), 11);
}

#[test]
fn fit_reports_table_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--seed", "3"]);
    let data = d.join("ensemble.csv");
    let data = data.to_str().unwrap();
    let stdout = ok(d, &["fit", "--data", data, "--max-generated", "20000", "--seed", "5"]);
    assert!(stdout.contains("wall time"));
    let text = read(d, "fit.txt");
    assert!(!text.contains("wall"));
    let cells: Vec<&str> = text
        .lines()
        .map(|l| l.split_whitespace().collect::<Vec<_>>())
        .find(|c| c.len() == 7 && c[0] == "RT")
        .unwrap();
    assert_eq!(&cells[1..3], ["-", "-"]);
    let json: serde_json::Value = serde_json::from_str(&read(d, "fit.json")).unwrap();
    assert_eq!(json["params"].as_array().unwrap().len(), 17);
    assert_eq!(json["n_transitions"], 60);
    assert_eq!(read(d, "fit.csv").lines().count(), 18);

    let first = read(d, "fit.json");
    ok(d, &["fit", "--data", data, "--max-generated", "20000", "--seed", "5"]);
    assert_eq!(read(d, "fit.json"), first);
}

#[test]
fn cmi_rows_and_mean() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--seed", "4"]);
    let theta = d.join("theta.json");
    std::fs::write(
        &theta,
        serde_json::to_string(&attrition_core::CoefficientSet::janus5_reference().to_file(&ModelSpec::janus5())).unwrap(),
    )
    .unwrap();
    let data = d.join("ensemble.csv");
    ok(d, &["cmi", "--data", data.to_str().unwrap(), "--theta", theta.to_str().unwrap(), "--svg"]);
    let text = read(d, "cmi.csv");
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "series,t,RT,RBMP,BT,BAPC,BTOW");
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 6 * 10 + 10);
    assert_eq!(rows[0][0], "run_0");
    assert_eq!(rows[60][0], "mean");
    for k in 0..10 {
        for u in 2..7 {
            let avg: f64 = (0..6).map(|r| rows[r * 10 + k][u].parse::<f64>().unwrap()).sum::<f64>() / 6.0;
            let mean: f64 = rows[60 + k][u].parse().unwrap();
            assert!((mean - avg).abs() <= 1e-12 * avg.abs().max(1.0));
        }
    }
    assert_eq!(read(d, "cmi.svg").matches("<polyline").count(), 5);
}

#[test]
fn drift_matched_data_has_zero_momenta() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--noise", "0", "--substeps", "1"]);
    let theta = d.join("theta.json");
    std::fs::write(
        &theta,
        serde_json::to_string(&attrition_core::CoefficientSet::janus5_reference().to_file(&ModelSpec::janus5())).unwrap(),
    )
    .unwrap();
    let data = d.join("ensemble.csv");
    ok(d, &["cmi", "--data", data.to_str().unwrap(), "--theta", theta.to_str().unwrap()]);
    for line in read(d, "cmi.csv").lines().skip(1).filter(|l| l.starts_with("mean")) {
        for v in line.split(',').skip(2) {
            assert!(v.parse::<f64>().unwrap().abs() < 1e-9, "{line}");
        }
    }
}

#[test]
fn asa_bench_quadratic_and_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(a.path(), &["asa-bench", "--function", "quadratic", "--dims", "2", "--seed", "9"]);
    ok(b.path(), &["asa-bench", "--function", "quadratic", "--dims", "2", "--seed", "9"]);
    let text = read(a.path(), "asa_bench.csv");
    assert_eq!(text, read(b.path(), "asa_bench.csv"));
    let costs: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert!(costs.windows(2).all(|w| w[1] <= w[0]));
    assert!(*costs.last().unwrap() < 1e-6, "{}", costs.last().unwrap());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // missing input path
    assert_eq!(code(d, &["fit"]), 2);
    assert_eq!(code(d, &["fit", "--data", "/nonexistent/data.csv"]), 2);

    let bad = d.join("bad.csv");
    std::fs::write(&bad, "run,t,RT,RBMP,BT,BAPC,BTOW\n0,0,1,2,3,4,5\n0,5,1,2,3\n").unwrap();
    assert_eq!(code(d, &["fit", "--data", bad.to_str().unwrap()]), 3);

    let flat = d.join("flat.csv");
    let mut text = String::from("run,t,RT,RBMP,BT,BAPC,BTOW\n");
    for k in 0..11 {
        text += &format!("0,{},40,{},27,31,6\n", 5 * k, 85 - k);
    }
    std::fs::write(&flat, text).unwrap();
    assert_eq!(code(d, &["fit", "--data", flat.to_str().unwrap()]), 4);

    let cfg = d.join("cfg.json");
    std::fs::write(&cfg, r#"{"sim": {"runs": 2, "colour": "red"}}"#).unwrap();
    assert_eq!(code(d, &["simulate", "--config", cfg.to_str().unwrap()]), 2);

    let theta = d.join("theta.json");
    std::fs::write(&theta, r#"{"drift": [], "noise": []}"#).unwrap();
    assert_eq!(code(d, &["cmi", "--data", flat.to_str().unwrap(), "--theta", theta.to_str().unwrap()]), 2);

    let out = attrition(d, &["asa-bench", "--function", "sphere"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_drives_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("run.json");
    std::fs::write(
        &cfg,
        r#"{"model": {"builtin": "janus5"}, "sim": {"runs": 2, "epochs": 4, "seed": 8}, "io": {"data": "ensemble.csv"}}"#,
    )
    .unwrap();
    ok(d, &["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(read(d, "ensemble.csv").lines().count(), 1 + 2 * 5);
    // io.data resolves next to the config file
    ok(d, &["fit", "--config", cfg.to_str().unwrap(), "--max-generated", "2000"]);
    assert!(d.join("fit.json").exists());
}
