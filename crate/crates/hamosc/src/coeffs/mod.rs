//! System model: time-dependent coefficient matrices and structural checks.
//!
//! A [`SystemSpec`] holds everything that defines the first-order system
//! `Φ' = A(t)Φ + B(t)Ψ`, `Ψ' = C(t)Φ + (μ(t)I − A*(t))Ψ`: the dimension, the
//! start time, the three coefficient matrices as expression grids, the scalar
//! weight `μ`, and the positive scale function `p` used by the Riccati-side
//! transforms. [`validate`] probes the structural hypotheses (Hermitian `B`
//! and `C`, positive `p`) on a Chebyshev-spaced sample of a 100-unit window
//! and reports whether `B > 0` held at every probe.

pub mod expr;

pub use expr::{parse_expr, DomainError, ParseError, ScalarExpr};

use crate::matlin::{CMatrix, C64, EPS_HERM};

/// Number of probe points used by default for validation.
pub const DEFAULT_VALIDATION_SAMPLES: usize = 257;

/// Length of the probe window `[t0, t0 + VALIDATION_SPAN]`.
pub const VALIDATION_SPAN: f64 = 100.0;

/// Errors from evaluating expression-valued coefficients.
#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum CoeffError {
    #[error("entry ({row},{col}) ({part} part): {source}")]
    Entry {
        row: usize,
        col: usize,
        /// "real" or "imaginary"
        part: &'static str,
        source: DomainError,
    },
    #[error("scalar coefficient {name}: {source}")]
    Scalar {
        name: &'static str,
        source: DomainError,
    },
}

/// An `n×n` matrix of scalar expressions, split into real and imaginary parts.
#[derive(Debug, Clone)]
pub struct TimeMatrix {
    n: usize,
    re: Vec<ScalarExpr>,
    im: Vec<ScalarExpr>,
}

impl TimeMatrix {
    /// Build from row-major grids of real/imaginary part expressions.
    pub fn new(n: usize, re: Vec<ScalarExpr>, im: Vec<ScalarExpr>) -> TimeMatrix {
        assert!(n > 0, "dimension must be positive");
        assert_eq!(re.len(), n * n, "real grid has wrong length");
        assert_eq!(im.len(), n * n, "imaginary grid has wrong length");
        TimeMatrix { n, re, im }
    }

    /// Build a real matrix (imaginary parts identically zero).
    pub fn from_real(n: usize, re: Vec<ScalarExpr>) -> TimeMatrix {
        let im = (0..n * n).map(|_| ScalarExpr::constant(0.0)).collect();
        TimeMatrix::new(n, re, im)
    }

    /// Freeze a constant matrix into expressions.
    pub fn constant(m: &CMatrix) -> TimeMatrix {
        let n = m.dim();
        let mut re = Vec::with_capacity(n * n);
        let mut im = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let z = m.entry(i, j);
                re.push(ScalarExpr::constant(z.re));
                im.push(ScalarExpr::constant(z.im));
            }
        }
        TimeMatrix { n, re, im }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Entrywise evaluation at `t`.
    pub fn eval(&self, t: f64) -> Result<CMatrix, CoeffError> {
        let n = self.n;
        let mut data = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                let re = self.re[k].eval(t).map_err(|source| CoeffError::Entry {
                    row: i,
                    col: j,
                    part: "real",
                    source,
                })?;
                let im = self.im[k].eval(t).map_err(|source| CoeffError::Entry {
                    row: i,
                    col: j,
                    part: "imaginary",
                    source,
                })?;
                data[k] = C64::new(re, im);
            }
        }
        Ok(CMatrix::from_fn(n, |i, j| data[i * n + j]).expect("entries checked finite"))
    }

    /// True when every imaginary-part expression vanishes (within `tol`) at
    /// all the given probe times. Probe failures count as "not real".
    pub fn real_on(&self, probes: &[f64], tol: f64) -> bool {
        probes.iter().all(|&t| {
            self.im
                .iter()
                .all(|e| matches!(e.eval(t), Ok(v) if v.abs() <= tol))
        })
    }
}

/// Full data of the matrix system.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub n: usize,
    pub t0: f64,
    pub a: TimeMatrix,
    pub b: TimeMatrix,
    pub c: TimeMatrix,
    pub mu: ScalarExpr,
    pub p: ScalarExpr,
}

impl SystemSpec {
    /// Assemble a spec; panics on dimension mismatches (callers validate sizes
    /// at the parsing boundary).
    pub fn new(
        t0: f64,
        a: TimeMatrix,
        b: TimeMatrix,
        c: TimeMatrix,
        mu: ScalarExpr,
        p: ScalarExpr,
    ) -> SystemSpec {
        let n = a.dim();
        assert_eq!(b.dim(), n, "B dimension mismatch");
        assert_eq!(c.dim(), n, "C dimension mismatch");
        assert!(t0.is_finite());
        SystemSpec { n, t0, a, b, c, mu, p }
    }

    pub fn eval_a(&self, t: f64) -> Result<CMatrix, CoeffError> {
        self.a.eval(t)
    }

    pub fn eval_b(&self, t: f64) -> Result<CMatrix, CoeffError> {
        self.b.eval(t)
    }

    pub fn eval_c(&self, t: f64) -> Result<CMatrix, CoeffError> {
        self.c.eval(t)
    }

    pub fn eval_mu(&self, t: f64) -> Result<f64, CoeffError> {
        self.mu
            .eval(t)
            .map_err(|source| CoeffError::Scalar { name: "mu", source })
    }

    pub fn eval_p(&self, t: f64) -> Result<f64, CoeffError> {
        self.p
            .eval(t)
            .map_err(|source| CoeffError::Scalar { name: "p", source })
    }

    /// Central finite-difference derivative of `p` (step `1e-6·max(1,|t|)`).
    pub fn eval_p_prime(&self, t: f64) -> Result<f64, CoeffError> {
        self.p
            .derivative_fd(t)
            .map_err(|source| CoeffError::Scalar { name: "p'", source })
    }

    /// Heuristic realness check: all imaginary parts of A, B, C vanish on the
    /// validation probe grid. Used to decide whether determinant sign changes
    /// are meaningful.
    pub fn probably_real(&self) -> bool {
        let probes = chebyshev_probes(self.t0, 33);
        let tol = 1e-12;
        self.a.real_on(&probes, tol) && self.b.real_on(&probes, tol) && self.c.real_on(&probes, tol)
    }
}

/// The four coefficients of the two-dimensional scalar system
/// `φ' = a₁₁φ + a₁₂ψ`, `ψ' = a₂₁φ + a₂₂ψ`.
#[derive(Debug, Clone)]
pub struct ScalarSystemSpec {
    pub t0: f64,
    pub a11: ScalarExpr,
    pub a12: ScalarExpr,
    pub a21: ScalarExpr,
    pub a22: ScalarExpr,
}

impl ScalarSystemSpec {
    pub fn eval(&self, t: f64) -> Result<[f64; 4], CoeffError> {
        let get = |e: &ScalarExpr, name: &'static str| {
            e.eval(t).map_err(|source| CoeffError::Scalar { name, source })
        };
        Ok([
            get(&self.a11, "a11")?,
            get(&self.a12, "a12")?,
            get(&self.a21, "a21")?,
            get(&self.a22, "a22")?,
        ])
    }

    /// Diagonal gap `E(t) = a₁₁(t) − a₂₂(t)`.
    pub fn gap(&self, t: f64) -> Result<f64, CoeffError> {
        let v = self.eval(t)?;
        Ok(v[0] - v[3])
    }
}

/// One structural-check failure at a probe time.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ValidationIssue {
    pub t: f64,
    pub what: String,
}

/// Outcome of probing the structural hypotheses.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ValidationReport {
    /// No failures at any probe.
    pub ok: bool,
    /// `B(t) > 0` (smallest eigenvalue above the PSD slack) at every probe.
    pub b_positive_definite: bool,
    /// Failures, capped at [`MAX_REPORTED_ISSUES`].
    pub issues: Vec<ValidationIssue>,
    /// Total number of failures found (may exceed `issues.len()`).
    pub total_issue_count: usize,
    /// Number of probe points used.
    pub probe_count: usize,
}

/// Cap on individually reported validation failures.
pub const MAX_REPORTED_ISSUES: usize = 32;

/// Chebyshev-spaced probe grid on `[t0, t0 + VALIDATION_SPAN]` (endpoints included).
pub fn chebyshev_probes(t0: f64, count: usize) -> Vec<f64> {
    assert!(count >= 2);
    let half = 0.5 * VALIDATION_SPAN;
    (0..count)
        .map(|k| t0 + half * (1.0 - (std::f64::consts::PI * k as f64 / (count - 1) as f64).cos()))
        .collect()
}

/// Probe the structural hypotheses of the system at `sample_count`
/// Chebyshev-spaced points on `[t0, t0+100]`: `B` and `C` Hermitian within
/// the relative tolerance [`EPS_HERM`], `p > 0`, and (reported, not required)
/// `B > 0`.
pub fn validate(spec: &SystemSpec, sample_count: usize) -> ValidationReport {
    assert!(sample_count >= 2, "need at least two probe points");
    let probes = chebyshev_probes(spec.t0, sample_count);
    let mut issues: Vec<ValidationIssue> = Vec::new();
    let mut total = 0usize;
    let mut b_positive = true;

    let push = |issues: &mut Vec<ValidationIssue>, total: &mut usize, t: f64, what: String| {
        *total += 1;
        if issues.len() < MAX_REPORTED_ISSUES {
            issues.push(ValidationIssue { t, what });
        }
    };

    for &t in &probes {
        // Hermiticity of B and C, naming the worst-offending entry.
        for (label, tm) in [("B", &spec.b), ("C", &spec.c)] {
            match tm.eval(t) {
                Ok(m) => {
                    let defect = m.hermiticity_defect();
                    let scale = m.norm().max(1e-300);
                    if defect > EPS_HERM * scale.max(1.0) {
                        let (mut wi, mut wj, mut worst) = (0usize, 0usize, 0.0f64);
                        for i in 0..m.dim() {
                            for j in 0..m.dim() {
                                let d = (m.entry(i, j) - m.entry(j, i).conj()).norm();
                                if d > worst {
                                    worst = d;
                                    wi = i;
                                    wj = j;
                                }
                            }
                        }
                        push(
                            &mut issues,
                            &mut total,
                            t,
                            format!(
                                "{label} is not Hermitian: entry ({wi},{wj}) vs conj ({wj},{wi}) differ by {worst:.3e}"
                            ),
                        );
                    } else if label == "B" {
                        // PSD probe for the side condition B > 0.
                        match crate::matlin::eig_hermitian(&crate::matlin::hermitian_part(&m)) {
                            Ok(spectrum) => {
                                if spectrum.min() <= crate::matlin::EPS_PSD * scale.max(1.0) {
                                    b_positive = false;
                                }
                            }
                            Err(_) => b_positive = false,
                        }
                    }
                }
                Err(e) => {
                    push(&mut issues, &mut total, t, format!("{label} evaluation failed: {e}"));
                    if label == "B" {
                        b_positive = false;
                    }
                }
            }
        }
        // A just needs to evaluate.
        if let Err(e) = spec.a.eval(t) {
            push(&mut issues, &mut total, t, format!("A evaluation failed: {e}"));
        }
        // p positive; mu evaluable.
        match spec.eval_p(t) {
            Ok(v) if v > 0.0 => {}
            Ok(v) => push(&mut issues, &mut total, t, format!("p(t) = {v} is not positive")),
            Err(e) => push(&mut issues, &mut total, t, format!("p evaluation failed: {e}")),
        }
        if let Err(e) = spec.eval_mu(t) {
            push(&mut issues, &mut total, t, format!("mu evaluation failed: {e}"));
        }
    }

    ValidationReport {
        ok: total == 0,
        b_positive_definite: b_positive,
        issues,
        total_issue_count: total,
        probe_count: sample_count,
    }
}

/// Shorthand: evaluate a matrix-of-strings literal into a [`TimeMatrix`].
/// Rows are given as slices of real-part expression sources.
pub fn time_matrix_from_strs(rows: &[&[&str]]) -> Result<TimeMatrix, ParseError> {
    let n = rows.len();
    assert!(n > 0 && rows.iter().all(|r| r.len() == n), "grid must be square");
    let mut re = Vec::with_capacity(n * n);
    for row in rows {
        for src in *row {
            re.push(ScalarExpr::parse(src)?);
        }
    }
    Ok(TimeMatrix::from_real(n, re))
}
