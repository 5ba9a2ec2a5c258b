use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_calaudit"));
    cmd.args(args)
        .env_remove("CALAUDIT_SEED")
        .env_remove("CALAUDIT_INJECT_SMCE_SCALE");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn json_out(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "bad JSON ({e}): {}\n{}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn audit_tight_example_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "c1.csv", "value,label\n0.3,0\n0.7,1\n");
    let out = run(&["audit", "--input", &input], &[]);
    assert_eq!(out.status.code(), Some(0));
    let report = json_out(&out);
    assert!((report["metrics"]["smce"]["value"].as_f64().unwrap() - 0.06).abs() < 1e-9);
    assert!((report["metrics"]["pgap"]["value"].as_f64().unwrap() - 0.08).abs() < 1e-9);
    assert_eq!(report["passed"], true);
    assert_eq!(report["slacks"].as_array().unwrap().len(), 3);
}

#[test]
fn audit_calibrated_logits_in_json() {
    let dir = tempfile::tempdir().unwrap();
    // logit 0 with half the mass on each label is calibrated for cross-entropy
    let input = write(
        dir.path(),
        "cal.json",
        r#"[{"value": 0.0, "label": 1, "weight": 1}, {"value": 0.0, "label": 0, "weight": 1}]"#,
    );
    let csv = dir.path().join("rel.csv");
    let out = run(
        &[
            "audit",
            "--input",
            &input,
            "--space",
            "logit",
            "--csv",
            csv.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = json_out(&out);
    for metric in ["dual_smce", "dual_pgap", "smce_of_predictions"] {
        assert!(
            report["metrics"][metric]["value"].as_f64().unwrap().abs() < 1e-9,
            "{metric}"
        );
    }
    assert!(fs::read_to_string(csv)
        .unwrap()
        .starts_with("midpoint,frequency,mass\n"));
}

#[test]
fn audit_random_file_has_nonnegative_slacks() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::new();
    let mut state: u64 = 12345;
    for _ in 0..1000 {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        let v = (state >> 11) as f64 / (1u64 << 53) as f64;
        let y = u8::from((state >> 7).is_multiple_of(3));
        text.push_str(&format!("{v},{y}\n"));
    }
    let input = write(dir.path(), "random.csv", &text);
    let out = run(&["audit", "--input", &input, "--bins", "10"], &[]);
    assert_eq!(out.status.code(), Some(0));
    let report = json_out(&out);
    for s in report["slacks"].as_array().unwrap() {
        assert!(s["slack"].as_f64().unwrap() >= -1e-8);
    }
}

#[test]
fn audit_rejects_bad_input_and_low_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.csv", "0.5,2\n");
    assert_eq!(run(&["audit", "--input", &bad], &[]).status.code(), Some(1));
    assert_eq!(
        run(&["audit", "--input", "/does/not/exist.csv"], &[])
            .status
            .code(),
        Some(1)
    );
    let ok = write(dir.path(), "ok.csv", "0.5,1\n-0.5,0\n");
    let low = run(
        &[
            "audit", "--input", &ok, "--space", "logit", "--lambda", "0.1",
        ],
        &[],
    );
    assert_eq!(low.status.code(), Some(1));
    let high = run(
        &[
            "audit", "--input", &ok, "--space", "logit", "--lambda", "0.5",
        ],
        &[],
    );
    assert_eq!(high.status.code(), Some(0));
    assert_eq!(
        json_out(&high)["metrics"]["dual_pgap"]["params"]["lambda"],
        0.5
    );
}

#[test]
fn verify_default_and_injected_fault() {
    let out = run(&["verify", "--trials", "5"], &[]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json_out(&out)["passed"], true);

    let named_only = run(&["verify", "--trials", "0"], &[("CALAUDIT_SEED", "7")]);
    let report = json_out(&named_only);
    assert_eq!(report["seed"], 7);
    assert_eq!(report["trials"], 0);

    let broken = run(
        &["verify", "--trials", "0"],
        &[("CALAUDIT_INJECT_SMCE_SCALE", "1.5")],
    );
    assert_eq!(broken.status.code(), Some(2));
    assert_eq!(json_out(&broken)["passed"], false);
}

#[test]
fn tight_c2_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("landscape.csv");
    let out = run(
        &[
            "tight",
            "--which",
            "C2",
            "--epsilon",
            "0.1",
            "--csv",
            csv.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(0));
    let report = json_out(&out);
    assert!(report["max_abs_diff"].as_f64().unwrap() <= 1e-9);
    let landscape = fs::read_to_string(csv).unwrap();
    assert_eq!(landscape.lines().count(), 42);
    assert_eq!(
        run(&["tight", "--which", "C1", "--epsilon", "0.3"], &[])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn figure2_reliability_shows_miscalibration() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("reliability.csv");
    let out = run(&["figure2", "--csv", csv.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(0));
    let report = json_out(&out);
    assert!(report["fit"]["a"].as_f64().unwrap() > 0.0);
    let text = fs::read_to_string(csv).unwrap();
    let worst = text
        .lines()
        .skip(1)
        .filter_map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            let freq: f64 = cols[1].parse().ok()?;
            Some((freq - cols[0].parse::<f64>().unwrap()).abs())
        })
        .fold(0.0, f64::max);
    assert!(worst >= 0.05, "max deviation {worst}");
}

#[test]
fn srm_algorithms_on_generated_data() {
    let out = run(
        &["srm", "--algorithm", "1", "--alpha", "0.01", "--n", "20000"],
        &[],
    );
    assert_eq!(out.status.code(), Some(0));
    let trace = json_out(&out);
    assert!(trace["pgap"].as_f64().unwrap() <= 0.01);
    assert!(trace["steps"]
        .as_array()
        .unwrap()
        .iter()
        .all(|s| s["decision"].is_string()));

    let out = run(
        &["srm", "--algorithm", "2", "--lambda", "2", "--n", "1000"],
        &[],
    );
    let trace = json_out(&out);
    assert_eq!(trace["complexity"], 0);
    assert_eq!(trace["steps"].as_array().unwrap().len(), 1);

    assert_eq!(
        run(&["srm", "--algorithm", "3"], &[]).status.code(),
        Some(1)
    );
}

#[test]
fn srm_reads_featured_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(
        dir.path(),
        "ramp.csv",
        "x,label\n0,0\n1,0\n2,0\n3,1\n4,1\n5,1\n",
    );
    let out = run(
        &["srm", "--algorithm", "1", "--s0", "0", "--input", &input],
        &[],
    );
    assert_eq!(out.status.code(), Some(0));
    let trace = json_out(&out);
    assert_eq!(trace["loss"], 0.0);
    assert_eq!(trace["data"]["rows"], 6);
}
