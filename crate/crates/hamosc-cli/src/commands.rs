//! Subcommand implementations.
//!
//! Exit-code contract, shared by every subcommand:
//!
//! * `0` — success (verdicts are data, not errors);
//! * `2` — the configuration is well-formed but semantically invalid;
//! * `3` — unreadable file, malformed JSON, unknown keys, bad dimensions or
//!   unparsable expressions (also used for output files that cannot be
//!   written);
//! * `4` — the requested integration failed (escape, step-size underflow,
//!   coefficient evaluation failure mid-run).

use crate::config::{self, BuiltConfig, ConfigDocument, Issue};
use crate::report::{
    config_hash, to_json_string, write_trajectory_csv, ReportDocument, ValidationDocument, VERSION,
};
use hamosc::criteria::{self, CriteriaError, CriterionReport, Theorem};
use hamosc::integrate::{integrate_system, scan_det_zeros, ZeroRecord};
use std::fs;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SEMANTIC: i32 = 2;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_INTEGRATION: i32 = 4;

/// Zero-detection threshold for the singularity monitor.
const ZETA: f64 = 1e-6;

enum LoadFailure {
    Io(String),
    Parse(config::ParseFailure),
    Semantic(config::SemanticFailure),
}

impl LoadFailure {
    fn exit_code(&self) -> i32 {
        match self {
            LoadFailure::Io(_) | LoadFailure::Parse(_) => EXIT_PARSE,
            LoadFailure::Semantic(_) => EXIT_SEMANTIC,
        }
    }

    fn describe(&self) -> String {
        match self {
            LoadFailure::Io(m) => format!("cannot read configuration: {m}"),
            LoadFailure::Parse(p) => match p.offset {
                Some(off) => format!("configuration rejected: {} (byte {off})", p.message),
                None => format!("configuration rejected: {}", p.message),
            },
            LoadFailure::Semantic(s) => {
                let mut out = String::from("configuration is semantically invalid:");
                for issue in &s.issues {
                    out.push_str(&format!("\n  {}: {}", issue.subject, issue.message));
                }
                out
            }
        }
    }
}

struct Loaded {
    doc: ConfigDocument,
    built: BuiltConfig,
    sha: String,
    probe: hamosc::coeffs::ValidationReport,
}

fn load(path: &Path) -> Result<Loaded, (Option<String>, LoadFailure)> {
    let raw = fs::read(path).map_err(|e| (None, LoadFailure::Io(e.to_string())))?;
    let sha = config_hash(&raw);
    let src = String::from_utf8_lossy(&raw).into_owned();
    let doc =
        config::parse_config(&src).map_err(|e| (Some(sha.clone()), LoadFailure::Parse(e)))?;
    let built = config::build(&doc).map_err(|e| (Some(sha.clone()), LoadFailure::Parse(e)))?;
    let probe = config::semantic_check(&doc, &built)
        .map_err(|e| (Some(sha.clone()), LoadFailure::Semantic(e)))?;
    Ok(Loaded {
        doc,
        built,
        sha,
        probe,
    })
}

/// Where a `--json` document goes: a file, or stdout for `-`.
fn write_json(json_path: &Path, body: &str) -> Result<(), String> {
    if json_path == Path::new("-") {
        println!("{body}");
        Ok(())
    } else {
        fs::write(json_path, body).map_err(|e| format!("{}: {e}", json_path.display()))
    }
}

fn emit_json_or_exit(json: &Option<PathBuf>, body: &str) -> i32 {
    if let Some(path) = json {
        if let Err(m) = write_json(path, body) {
            eprintln!("cannot write JSON report: {m}");
            return EXIT_PARSE;
        }
    }
    EXIT_OK
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

pub fn cmd_validate(path: &Path, json: &Option<PathBuf>) -> i32 {
    match load(path) {
        Ok(loaded) => {
            let doc = ValidationDocument {
                tool: "hamosc",
                version: VERSION,
                config_sha256: Some(loaded.sha),
                valid: true,
                stage: "ok",
                issues: Vec::new(),
                offset: None,
                probe: Some(loaded.probe.clone()),
            };
            println!(
                "OK: configuration is valid (n = {}, t0 = {}, {} probe points, B positive definite: {})",
                loaded.doc.n,
                loaded.doc.t0,
                loaded.probe.probe_count,
                if loaded.probe.b_positive_definite { "yes" } else { "no" },
            );
            emit_json_or_exit(json, &to_json_string(&doc))
        }
        Err((sha, failure)) => {
            let (stage, issues, offset, probe) = match &failure {
                LoadFailure::Io(m) => (
                    "io",
                    vec![Issue {
                        subject: "config".into(),
                        message: m.clone(),
                    }],
                    None,
                    None,
                ),
                LoadFailure::Parse(p) => (
                    "parse",
                    vec![Issue {
                        subject: "config".into(),
                        message: p.message.clone(),
                    }],
                    p.offset,
                    None,
                ),
                LoadFailure::Semantic(s) => {
                    ("semantic", s.issues.clone(), None, s.probe.clone())
                }
            };
            let doc = ValidationDocument {
                tool: "hamosc",
                version: VERSION,
                config_sha256: sha,
                valid: false,
                stage,
                issues,
                offset,
                probe,
            };
            eprintln!("{}", failure.describe());
            if let Some(path) = json {
                if let Err(m) = write_json(path, &to_json_string(&doc)) {
                    eprintln!("cannot write JSON report: {m}");
                }
            }
            failure.exit_code()
        }
    }
}

// ---------------------------------------------------------------------------
// integrate
// ---------------------------------------------------------------------------

pub fn cmd_integrate(
    path: &Path,
    t_override: Option<f64>,
    csv: &Option<PathBuf>,
    json: &Option<PathBuf>,
) -> i32 {
    let loaded = match load(path) {
        Ok(l) => l,
        Err((_, failure)) => {
            eprintln!("{}", failure.describe());
            return failure.exit_code();
        }
    };
    let t_end = t_override.unwrap_or(loaded.built.t_end);
    if !(t_end > loaded.doc.t0 && t_end.is_finite()) {
        eprintln!(
            "invalid horizon: T = {t_end} must be finite and exceed t0 = {}",
            loaded.doc.t0
        );
        return EXIT_SEMANTIC;
    }

    let traj = match integrate_system(
        &loaded.built.spec,
        &loaded.built.phi0,
        &loaded.built.psi0,
        t_end,
        &loaded.built.integrator,
    ) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("integration failed: {e}");
            return EXIT_INTEGRATION;
        }
    };
    let scan = scan_det_zeros(&traj, ZETA);
    let defect_max = traj
        .conjoined_defect
        .iter()
        .cloned()
        .fold(0.0f64, f64::max);

    if let Some(csv_path) = csv {
        let mut buf = Vec::new();
        write_trajectory_csv(&traj, &mut buf).expect("writing to memory cannot fail");
        if let Err(e) = fs::write(csv_path, &buf) {
            eprintln!("cannot write CSV: {}: {e}", csv_path.display());
            return EXIT_PARSE;
        }
    }

    println!(
        "integrated [{}, {t_end}] in {} accepted steps ({} rescale events)",
        loaded.doc.t0,
        traj.times.len().saturating_sub(1),
        traj.rescale_log.len(),
    );
    println!(
        "conjoined defect max {:.3e}; {} det-zero(s), {} near-miss(es)",
        defect_max,
        scan.zeros.len(),
        scan.near_misses.len(),
    );
    for z in &scan.zeros {
        println!(
            "  det zero at t = {:.9} (monitor {:.3e})",
            z.t_zero, z.sigma_ratio_min
        );
    }

    let mut doc = ReportDocument::new("integrate", loaded.sha);
    doc.zeros = Some(scan.zeros);
    doc.near_misses = Some(scan.near_misses);
    doc.defect_max = Some(defect_max);
    doc.rescale_events = Some(traj.rescale_log.clone());
    doc.accepted_steps = Some(traj.times.len().saturating_sub(1));
    doc.horizon = Some(t_end);
    emit_json_or_exit(json, &to_json_string(&doc))
}

// ---------------------------------------------------------------------------
// criteria
// ---------------------------------------------------------------------------

/// Which criteria to evaluate: the whole catalogue or a single member.
pub fn parse_theorem_selection(s: &str) -> Result<Vec<Theorem>, String> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(Theorem::all().to_vec());
    }
    Theorem::parse(s)
        .map(|t| vec![t])
        .ok_or_else(|| format!("unknown criterion '{s}' (expected all, 1.1, 2.1, 3.1, 3.2 or 3.3)"))
}

fn print_report(report: &CriterionReport) {
    println!(
        "{}  {}  {}",
        report.theorem.id(),
        if report.applicable {
            "applicable    "
        } else {
            "not-applicable"
        },
        report.verdict,
    );
    println!("      {}", report.reason);
    for est in &report.estimates {
        println!(
            "      series '{}': final {:.6e} vs threshold {:.1e} -> {}",
            est.label, est.final_value, est.threshold, est.verdict
        );
    }
}

pub fn cmd_criteria(path: &Path, selection: &str, json: &Option<PathBuf>) -> i32 {
    let theorems = match parse_theorem_selection(selection) {
        Ok(sel) => sel,
        Err(m) => {
            eprintln!("{m}");
            return EXIT_SEMANTIC;
        }
    };
    let loaded = match load(path) {
        Ok(l) => l,
        Err((_, failure)) => {
            eprintln!("{}", failure.describe());
            return failure.exit_code();
        }
    };

    let reports: Vec<CriterionReport> = theorems
        .into_iter()
        .map(|t| criteria::evaluate(&loaded.built.spec, t, &loaded.built.criteria))
        .collect();
    for report in &reports {
        print_report(report);
    }

    let mut doc = ReportDocument::new("criteria", loaded.sha);
    doc.reports = Some(reports);
    doc.horizon = Some(loaded.built.criteria.t_max);
    emit_json_or_exit(json, &to_json_string(&doc))
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

pub fn cmd_compare(path: &Path, json: &Option<PathBuf>) -> i32 {
    let loaded = match load(path) {
        Ok(l) => l,
        Err((_, failure)) => {
            eprintln!("{}", failure.describe());
            return failure.exit_code();
        }
    };

    let outcome = match criteria::compare_all(&loaded.built.spec, &loaded.built.criteria) {
        Ok(o) => o,
        Err(CriteriaError::Integrate(e)) => {
            eprintln!("integration cross-check failed: {e}");
            return EXIT_INTEGRATION;
        }
        Err(e) => {
            eprintln!("comparison failed: {e}");
            return EXIT_SEMANTIC;
        }
    };

    for report in &outcome.reports {
        print_report(report);
    }
    println!(
        "direct integration over [{}, {}]: {} det-zero(s), {} near-miss(es)",
        loaded.doc.t0,
        outcome.horizon,
        outcome.zeros.len(),
        outcome.near_misses.len(),
    );
    if outcome.disagreement {
        println!(
            "WARNING: oscillation claimed but fewer than two zeros detected over the horizon"
        );
    }

    let mut doc = ReportDocument::new("compare", loaded.sha);
    doc.reports = Some(outcome.reports);
    doc.zeros = Some(outcome.zeros);
    doc.near_misses = Some(outcome.near_misses);
    doc.disagreement = Some(outcome.disagreement);
    doc.horizon = Some(outcome.horizon);
    emit_json_or_exit(json, &to_json_string(&doc))
}

#[allow(dead_code)]
fn zero_list_times(zeros: &[ZeroRecord]) -> Vec<f64> {
    zeros.iter().map(|z| z.t_zero).collect()
}
