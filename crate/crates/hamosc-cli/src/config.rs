//! Configuration documents: JSON schema, expression compilation, and
//! structural validation.
//!
//! Failures are split into two stages with distinct exit codes:
//!
//! * **parse stage** (exit 3) — unreadable file, malformed JSON, unknown
//!   keys, inconsistent dimensions, expressions that do not parse;
//! * **semantic stage** (exit 2) — the document is well-formed but violates
//!   a structural rule: non-Hermitian `B` or `C`, non-positive weight `p`,
//!   bad integrator tolerances or probe horizons, an invalid shift matrix
//!   `K` or functional weight.

use hamosc::coeffs::{self, ScalarExpr, SystemSpec, TimeMatrix};
use hamosc::criteria::CriteriaOpts;
use hamosc::integrate::IntegratorOpts;
use hamosc::matlin::{CMatrix, FunctionalSpec};
use serde::Deserialize;

/// One matrix entry: real part required, imaginary part optional.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryExpr {
    pub re: String,
    #[serde(default)]
    pub im: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_atol")]
    pub atol: f64,
    /// Default integration horizon (overridable with `--T`).
    #[serde(rename = "T", default = "default_horizon")]
    pub t_end: f64,
}

fn default_rtol() -> f64 {
    1e-9
}
fn default_atol() -> f64 {
    1e-12
}
fn default_horizon() -> f64 {
    50.0
}

impl Default for IntegratorSection {
    fn default() -> Self {
        IntegratorSection {
            rtol: default_rtol(),
            atol: default_atol(),
            t_end: default_horizon(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriteriaSection {
    /// Probe horizon for the criterion evaluators.
    #[serde(rename = "T_max", default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_checkpoints")]
    pub checkpoints: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Constant symmetric shift matrix for the functional criterion.
    #[serde(rename = "K", default)]
    pub k: Option<Vec<Vec<f64>>>,
    /// Weight matrix of the positive functional.
    #[serde(default)]
    pub g_weight: Option<Vec<Vec<f64>>>,
}

fn default_t_max() -> f64 {
    200.0
}
fn default_checkpoints() -> usize {
    8
}
fn default_threshold() -> f64 {
    50.0
}

impl Default for CriteriaSection {
    fn default() -> Self {
        CriteriaSection {
            t_max: default_t_max(),
            checkpoints: default_checkpoints(),
            threshold: default_threshold(),
            k: None,
            g_weight: None,
        }
    }
}

/// The on-disk configuration document. Unknown keys are rejected.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub n: usize,
    pub t0: f64,
    #[serde(rename = "A")]
    pub a: Vec<Vec<EntryExpr>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<EntryExpr>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<EntryExpr>>,
    pub mu: String,
    #[serde(default = "default_p")]
    pub p: String,
    /// Initial Φ value (defaults to the identity).
    #[serde(default)]
    pub phi0: Option<Vec<Vec<f64>>>,
    /// Initial Ψ value (defaults to zero).
    #[serde(default)]
    pub psi0: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub criteria: CriteriaSection,
}

fn default_p() -> String {
    "1".to_string()
}

/// Parse-stage failure (exit 3).
#[derive(Debug, Clone)]
pub struct ParseFailure {
    pub message: String,
    /// Byte offset of the error: into the file for JSON errors, into the
    /// named expression for expression errors.
    pub offset: Option<usize>,
}

/// One semantic problem, naming what it is about.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Issue {
    pub subject: String,
    pub message: String,
}

/// Semantic-stage failure (exit 2).
#[derive(Debug, Clone)]
pub struct SemanticFailure {
    pub issues: Vec<Issue>,
    /// The structural probe report, when the probe stage was reached.
    pub probe: Option<coeffs::ValidationReport>,
}

/// Everything compiled out of a valid document.
#[derive(Debug)]
pub struct BuiltConfig {
    pub spec: SystemSpec,
    pub phi0: CMatrix,
    pub psi0: CMatrix,
    pub integrator: IntegratorOpts,
    /// Default integration horizon from the document.
    pub t_end: f64,
    pub criteria: CriteriaOpts,
}

/// Number of structural probe points used by the semantic stage.
pub const PROBE_POINTS: usize = 64;

/// Deserializes the document, rejecting unknown keys and malformed JSON.
pub fn parse_config(src: &str) -> Result<ConfigDocument, ParseFailure> {
    serde_json::from_str::<ConfigDocument>(src).map_err(|e| ParseFailure {
        message: e.to_string(),
        offset: Some(byte_offset(src, e.line(), e.column())),
    })
}

/// Byte offset of 1-based (line, column) into `src` (clamped to the text).
fn byte_offset(src: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut seen = 1usize;
    let mut start = 0usize;
    for (idx, b) in src.bytes().enumerate() {
        if seen == line {
            break;
        }
        if b == b'\n' {
            seen += 1;
            start = idx + 1;
        }
    }
    (start + column.saturating_sub(1)).min(src.len())
}

fn compile_entry_grid(
    label: &str,
    n: usize,
    rows: &[Vec<EntryExpr>],
) -> Result<TimeMatrix, ParseFailure> {
    if rows.len() != n {
        return Err(ParseFailure {
            message: format!("{label} must have {n} rows, got {}", rows.len()),
            offset: None,
        });
    }
    let mut re = Vec::with_capacity(n * n);
    let mut im = Vec::with_capacity(n * n);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(ParseFailure {
                message: format!("{label} row {i} must have {n} entries, got {}", row.len()),
                offset: None,
            });
        }
        for (j, entry) in row.iter().enumerate() {
            re.push(compile_expr(&format!("{label}[{i}][{j}].re"), &entry.re)?);
            im.push(match &entry.im {
                Some(src) => compile_expr(&format!("{label}[{i}][{j}].im"), src)?,
                None => ScalarExpr::constant(0.0),
            });
        }
    }
    Ok(TimeMatrix::new(n, re, im))
}

fn compile_expr(subject: &str, src: &str) -> Result<ScalarExpr, ParseFailure> {
    ScalarExpr::parse(src).map_err(|e| ParseFailure {
        message: format!("{subject}: {e}"),
        offset: Some(e.offset),
    })
}

fn numeric_matrix(
    label: &str,
    n: usize,
    rows: &[Vec<f64>],
) -> Result<CMatrix, ParseFailure> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(ParseFailure {
            message: format!("{label} must be an {n}x{n} numeric array"),
            offset: None,
        });
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    CMatrix::from_real_rows(n, &flat).map_err(|e| ParseFailure {
        message: format!("{label}: {e}"),
        offset: None,
    })
}

/// Compiles a parsed document: dimension checks and expression compilation
/// (still the parse stage — failures here exit 3).
pub fn build(doc: &ConfigDocument) -> Result<BuiltConfig, ParseFailure> {
    let n = doc.n;
    if n == 0 {
        return Err(ParseFailure {
            message: "the dimension n must be at least 1".into(),
            offset: None,
        });
    }
    if !doc.t0.is_finite() {
        return Err(ParseFailure {
            message: "t0 must be finite".into(),
            offset: None,
        });
    }
    let a = compile_entry_grid("A", n, &doc.a)?;
    let b = compile_entry_grid("B", n, &doc.b)?;
    let c = compile_entry_grid("C", n, &doc.c)?;
    let mu = compile_expr("mu", &doc.mu)?;
    let p = compile_expr("p", &doc.p)?;
    let spec = SystemSpec::new(doc.t0, a, b, c, mu, p);

    let phi0 = match &doc.phi0 {
        Some(rows) => numeric_matrix("phi0", n, rows)?,
        None => CMatrix::identity(n),
    };
    let psi0 = match &doc.psi0 {
        Some(rows) => numeric_matrix("psi0", n, rows)?,
        None => CMatrix::zeros(n),
    };
    let k_matrix = match &doc.criteria.k {
        Some(rows) => Some(numeric_matrix("criteria.K", n, rows)?),
        None => None,
    };
    let g_weight = match &doc.criteria.g_weight {
        Some(rows) => Some(numeric_matrix("criteria.g_weight", n, rows)?),
        None => None,
    };

    let integrator = IntegratorOpts {
        rtol: doc.integrator.rtol,
        atol: doc.integrator.atol,
        ..Default::default()
    };
    let criteria = CriteriaOpts {
        t_max: doc.criteria.t_max,
        checkpoints: doc.criteria.checkpoints,
        threshold: doc.criteria.threshold,
        k_matrix,
        g_weight,
        integrator: integrator.clone(),
        ..Default::default()
    };
    Ok(BuiltConfig {
        spec,
        phi0,
        psi0,
        integrator,
        t_end: doc.integrator.t_end,
        criteria,
    })
}

/// Semantic stage: structural probes of the coefficients plus parameter
/// sanity. Returns the probe report on success; failures exit 2.
pub fn semantic_check(
    doc: &ConfigDocument,
    built: &BuiltConfig,
) -> Result<coeffs::ValidationReport, SemanticFailure> {
    let mut issues = Vec::new();

    if !(doc.integrator.rtol > 0.0 && doc.integrator.rtol.is_finite()) {
        issues.push(Issue {
            subject: "integrator.rtol".into(),
            message: format!("must be positive and finite, got {}", doc.integrator.rtol),
        });
    }
    if !(doc.integrator.atol > 0.0 && doc.integrator.atol.is_finite()) {
        issues.push(Issue {
            subject: "integrator.atol".into(),
            message: format!("must be positive and finite, got {}", doc.integrator.atol),
        });
    }
    if !(doc.integrator.t_end > doc.t0 && doc.integrator.t_end.is_finite()) {
        issues.push(Issue {
            subject: "integrator.T".into(),
            message: format!(
                "must be finite and exceed t0 = {}, got {}",
                doc.t0, doc.integrator.t_end
            ),
        });
    }
    if !(doc.criteria.t_max > doc.t0 && doc.criteria.t_max.is_finite()) {
        issues.push(Issue {
            subject: "criteria.T_max".into(),
            message: format!(
                "must be finite and exceed t0 = {}, got {}",
                doc.t0, doc.criteria.t_max
            ),
        });
    }
    if doc.criteria.checkpoints < 4 {
        issues.push(Issue {
            subject: "criteria.checkpoints".into(),
            message: format!("must be at least 4, got {}", doc.criteria.checkpoints),
        });
    }
    if !(doc.criteria.threshold > 0.0 && doc.criteria.threshold.is_finite()) {
        issues.push(Issue {
            subject: "criteria.threshold".into(),
            message: format!("must be positive and finite, got {}", doc.criteria.threshold),
        });
    }
    if let Some(k) = &built.criteria.k_matrix {
        if !k.is_hermitian() || k.norm() == 0.0 {
            issues.push(Issue {
                subject: "criteria.K".into(),
                message: "must be a symmetric nonzero matrix".into(),
            });
        }
    }
    if let Some(w) = &built.criteria.g_weight {
        if let Err(e) = FunctionalSpec::new(w.clone()) {
            issues.push(Issue {
                subject: "criteria.g_weight".into(),
                message: e.to_string(),
            });
        }
    }

    let probe = coeffs::validate(&built.spec, PROBE_POINTS);
    for item in &probe.issues {
        issues.push(Issue {
            subject: "coefficients".into(),
            message: format!("t = {}: {}", item.t, item.what),
        });
    }
    if probe.total_issue_count > probe.issues.len() {
        issues.push(Issue {
            subject: "coefficients".into(),
            message: format!(
                "{} further probe failures not listed",
                probe.total_issue_count - probe.issues.len()
            ),
        });
    }

    if issues.is_empty() {
        Ok(probe)
    } else {
        Err(SemanticFailure {
            issues,
            probe: Some(probe),
        })
    }
}
