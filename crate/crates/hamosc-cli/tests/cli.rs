//! End-to-end tests of the `hamosc` binary: exit codes, report documents,
//! CSV output, and determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin_path() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_hamosc"))
}

fn config_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin_path())
        .args(args)
        .output()
        .unwrap_or_else(|e| panic!("failed to run {:?} {:?}: {e}", bin_path(), args))
}

fn run_json(args: &[&str]) -> (Output, serde_json::Value) {
    let dir = tempdir();
    let json_path = dir.join("out.json");
    let mut full: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    full.push("--json".into());
    full.push(json_path.display().to_string());
    let out = Command::new(bin_path())
        .args(&full)
        .output()
        .expect("binary runs");
    let doc: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(&json_path).unwrap_or_else(|e| {
            panic!(
                "no JSON written for {args:?}: {e}; stderr: {}",
                String::from_utf8_lossy(&out.stderr)
            )
        }),
    )
    .expect("valid JSON");
    std::fs::remove_dir_all(&dir).ok();
    (out, doc)
}

fn tempdir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!(
        "hamosc-cli-test-{}-{}",
        std::process::id(),
        COUNTER.fetch_add(1, std::sync::atomic::Ordering::SeqCst)
    ));
    std::fs::create_dir_all(&dir).expect("create temp dir");
    dir
}

static COUNTER: std::sync::atomic::AtomicU64 = std::sync::atomic::AtomicU64::new(0);

fn write_temp(name: &str, body: &str) -> PathBuf {
    let dir = tempdir();
    let path = dir.join(name);
    std::fs::write(&path, body).expect("write temp config");
    path
}

fn report_by_id<'a>(doc: &'a serde_json::Value, id: &str) -> &'a serde_json::Value {
    doc["reports"]
        .as_array()
        .expect("reports array")
        .iter()
        .find(|r| r["theorem"] == id)
        .unwrap_or_else(|| panic!("no report for {id}"))
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

#[test]
fn validate_accepts_the_golden_configs() {
    for name in ["harmonic.json", "rotation.json", "singular_b.json"] {
        let out = run(&["validate", config_dir().join(name).to_str().unwrap()]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{name}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn validate_missing_file_exits_3() {
    let out = run(&["validate", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn validate_malformed_json_exits_3_with_offset() {
    let path = write_temp("bad.json", "{\"n\": 1,, }");
    let (out, doc) = run_json(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(doc["valid"], false);
    assert_eq!(doc["stage"], "parse");
    assert!(doc["offset"].as_u64().is_some(), "{doc}");
}

#[test]
fn validate_unknown_key_exits_3() {
    let path = write_temp(
        "unknown.json",
        r#"{"n": 1, "t0": 0.0, "A": [[{"re": "0"}]], "B": [[{"re": "1"}]],
           "C": [[{"re": "-1"}]], "mu": "0", "surprise": true}"#,
    );
    let out = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("surprise"));
}

#[test]
fn validate_broken_expression_exits_3_with_entry_and_offset() {
    let path = write_temp(
        "expr.json",
        r#"{"n": 1, "t0": 0.0, "A": [[{"re": "0"}]], "B": [[{"re": "1/"}]],
           "C": [[{"re": "-1"}]], "mu": "0"}"#,
    );
    let (out, doc) = run_json(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let message = doc["issues"][0]["message"].as_str().unwrap();
    assert!(message.contains("B[0][0].re"), "{message}");
    assert_eq!(doc["offset"], 2);
}

#[test]
fn validate_non_hermitian_c_exits_2_and_names_the_entry() {
    let path = write_temp(
        "nonherm.json",
        r#"{"n": 2, "t0": 0.0,
            "A": [[{"re": "0"}, {"re": "0"}], [{"re": "0"}, {"re": "0"}]],
            "B": [[{"re": "1"}, {"re": "0"}], [{"re": "0"}, {"re": "1"}]],
            "C": [[{"re": "0"}, {"re": "1"}], [{"re": "2"}, {"re": "0"}]],
            "mu": "0"}"#,
    );
    let (out, doc) = run_json(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(doc["stage"], "semantic");
    let issues = doc["issues"].as_array().unwrap();
    assert!(
        issues
            .iter()
            .any(|i| i["message"].as_str().unwrap().contains('C')),
        "{doc}"
    );
}

#[test]
fn validate_negative_weight_function_exits_2() {
    let path = write_temp(
        "negp.json",
        r#"{"n": 1, "t0": 0.0, "A": [[{"re": "0"}]], "B": [[{"re": "1"}]],
           "C": [[{"re": "-1"}]], "mu": "0", "p": "-1"}"#,
    );
    let out = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

// ---------------------------------------------------------------------------
// integrate
// ---------------------------------------------------------------------------

#[test]
fn integrate_harmonic_reports_three_zeros() {
    let config = config_dir().join("harmonic.json");
    let (out, doc) = run_json(&["integrate", config.to_str().unwrap(), "--T", "10"]);
    assert_eq!(out.status.code(), Some(0));
    let zeros = doc["zeros"].as_array().unwrap();
    assert_eq!(zeros.len(), 3, "{doc}");
    let first = zeros[0]["t_zero"].as_f64().unwrap();
    assert!((first - std::f64::consts::FRAC_PI_2).abs() < 1e-5);
    assert!(doc["defect_max"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn integrate_writes_csv_with_one_row_per_step() {
    let dir = tempdir();
    let csv_path = dir.join("traj.csv");
    let config = config_dir().join("harmonic.json");
    let (_, doc) = run_json(&[
        "integrate",
        config.to_str().unwrap(),
        "--csv",
        csv_path.to_str().unwrap(),
    ]);
    let csv = std::fs::read_to_string(&csv_path).expect("csv written");
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,sigma_min_ratio,conjoined_defect,det_proxy_re,det_proxy_im"
    );
    let rows: Vec<&str> = lines.collect();
    let steps = doc["accepted_steps"].as_u64().unwrap() as usize;
    assert_eq!(rows.len(), steps + 1);
    for row in &rows {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 5);
        for f in fields {
            f.parse::<f64>().unwrap_or_else(|_| panic!("bad field {f}"));
        }
    }
    // 17 significant digits: mantissa with 16 fractional digits.
    let first = rows[1].split(',').nth(1).unwrap();
    let mantissa = first.split('e').next().unwrap();
    let frac = mantissa.split('.').nth(1).unwrap();
    assert_eq!(frac.len(), 16, "{first}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn integrate_rejects_backwards_horizon_with_exit_2() {
    let config = config_dir().join("harmonic.json");
    let out = run(&["integrate", config.to_str().unwrap(), "--T", "-5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn integrate_coefficient_blowup_exits_4() {
    let path = write_temp(
        "pole.json",
        r#"{"n": 1, "t0": 0.0, "A": [[{"re": "0"}]], "B": [[{"re": "1/(5 - t)"}]],
           "C": [[{"re": "-1"}]], "mu": "0", "integrator": {"T": 10.0}}"#,
    );
    let out = run(&["integrate", path.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(4),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

// ---------------------------------------------------------------------------
// criteria
// ---------------------------------------------------------------------------

#[test]
fn criteria_single_theorem_selects_one_report() {
    let config = config_dir().join("rotation.json");
    let (out, doc) = run_json(&["criteria", config.to_str().unwrap(), "--theorem", "3.2"]);
    assert_eq!(out.status.code(), Some(0));
    let reports = doc["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0]["theorem"], "T3.2");
    assert_eq!(reports[0]["verdict"], "oscillatory-evidence");
}

#[test]
fn criteria_rotation_catalogue_verdicts() {
    let config = config_dir().join("rotation.json");
    let (out, doc) = run_json(&["criteria", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report_by_id(&doc, "T3.2")["verdict"], "oscillatory-evidence");
    assert_eq!(report_by_id(&doc, "T1.1")["verdict"], "inconclusive");
    assert_eq!(report_by_id(&doc, "T1.1")["applicable"], true);
    assert_eq!(report_by_id(&doc, "T2.1")["applicable"], false);
}

#[test]
fn criteria_unknown_theorem_is_rejected() {
    let config = config_dir().join("rotation.json");
    let out = run(&["criteria", config.to_str().unwrap(), "--theorem", "9.9"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn criteria_verdicts_are_data_not_errors() {
    // An inconclusive-everywhere system still exits 0.
    let path = write_temp(
        "free.json",
        r#"{"n": 1, "t0": 0.0, "A": [[{"re": "0"}]], "B": [[{"re": "1"}]],
           "C": [[{"re": "0"}]], "mu": "0"}"#,
    );
    let (out, doc) = run_json(&["criteria", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    for report in doc["reports"].as_array().unwrap() {
        assert_eq!(report["verdict"], "inconclusive");
    }
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

#[test]
fn compare_rotation_cross_checks_against_zeros() {
    let config = config_dir().join("rotation.json");
    let (out, doc) = run_json(&["compare", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report_by_id(&doc, "T3.2")["verdict"], "oscillatory-evidence");
    assert_eq!(report_by_id(&doc, "T1.1")["verdict"], "inconclusive");
    assert!(doc["zeros"].as_array().unwrap().len() >= 3);
    assert_eq!(doc["disagreement"], false);
}

#[test]
fn compare_zero_system_is_all_inconclusive() {
    let path = write_temp(
        "zero.json",
        r#"{"n": 2, "t0": 0.0,
            "A": [[{"re": "0"}, {"re": "0"}], [{"re": "0"}, {"re": "0"}]],
            "B": [[{"re": "0"}, {"re": "0"}], [{"re": "0"}, {"re": "0"}]],
            "C": [[{"re": "0"}, {"re": "0"}], [{"re": "0"}, {"re": "0"}]],
            "mu": "0", "criteria": {"T_max": 20.0}}"#,
    );
    let (out, doc) = run_json(&["compare", path.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    for report in doc["reports"].as_array().unwrap() {
        assert_eq!(report["verdict"], "inconclusive", "{report}");
    }
    assert_eq!(doc["zeros"].as_array().unwrap().len(), 0);
}

// ---------------------------------------------------------------------------
// determinism
// ---------------------------------------------------------------------------

#[test]
fn reports_are_byte_identical_across_runs() {
    let config = config_dir().join("rotation.json");
    let dir = tempdir();
    let (a_path, b_path) = (dir.join("a.json"), dir.join("b.json"));
    for (path, threads) in [(&a_path, "1"), (&b_path, "4")] {
        let out = Command::new(bin_path())
            .args([
                "compare",
                config.to_str().unwrap(),
                "--json",
                path.to_str().unwrap(),
            ])
            .env("HAMOSC_THREADS", threads)
            .output()
            .expect("binary runs");
        assert_eq!(out.status.code(), Some(0));
    }
    let a = std::fs::read(&a_path).unwrap();
    let b = std::fs::read(&b_path).unwrap();
    assert_eq!(a, b, "reports differ between runs/thread counts");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn json_to_stdout_with_dash() {
    let config = config_dir().join("harmonic.json");
    let out = run(&["criteria", config.to_str().unwrap(), "--json", "-"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    let json_line = text
        .lines()
        .find(|l| l.starts_with('{'))
        .expect("JSON line on stdout");
    let doc: serde_json::Value = serde_json::from_str(json_line).unwrap();
    assert_eq!(doc["tool"], "hamosc");
    assert_eq!(doc["config_sha256"].as_str().unwrap().len(), 64);
}
