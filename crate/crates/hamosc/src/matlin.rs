//! Dense complex matrix utilities shared by the whole crate.
//!
//! Everything is built around [`CMatrix`], a square matrix of `Complex<f64>`
//! entries that is guaranteed finite on construction. On top of it the module
//! provides the Hermitian building blocks the oscillation criteria need:
//! Hermitian/skew splits, eigenvalues of Hermitian matrices, PSD square roots,
//! trace functionals `g(M) = tr(W M)`, the singularity-aware reciprocals
//! `nu_g` and `nu_0`, and the trace lower bound for `tr(S H S*)`.
//!
//! Numerical tolerances are fixed here as crate-wide constants so every module
//! agrees on what "Hermitian", "singular" and "positive semidefinite" mean.

use nalgebra::{Complex, DMatrix};
use thiserror::Error;

/// Complex double-precision scalar used throughout the crate.
pub type C64 = Complex<f64>;

/// Relative tolerance for Hermiticity checks: `H` counts as Hermitian when
/// `||H - H*||_F <= EPS_HERM * ||H||_F`.
pub const EPS_HERM: f64 = 1e-10;
/// Relative singularity threshold on eigenvalue/singular-value ratios.
pub const EPS_SING: f64 = 1e-12;
/// Relative tolerance below which small negative eigenvalues still count as PSD.
pub const EPS_PSD: f64 = 1e-10;
/// Slack granted when asserting the analytic inequalities numerically.
pub const EPS_INEQ: f64 = 1e-10;

/// Errors produced by the matrix layer.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum MatError {
    /// A constructor received data that is not a square matrix.
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    /// A constructor received a NaN or infinite entry.
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    /// An operation requiring a Hermitian input got a matrix with
    /// `||M - M*|| > EPS_HERM * ||M||`.
    #[error("matrix is not Hermitian (relative defect {defect:.3e})")]
    NotHermitian { defect: f64 },
    /// An operation requiring a PSD input got a matrix with an eigenvalue
    /// below `-EPS_PSD * scale`.
    #[error("matrix is not positive semidefinite (lambda_min = {lambda_min:.6e})")]
    NotPsd { lambda_min: f64 },
    /// Inversion of a numerically singular matrix was attempted.
    #[error("matrix is numerically singular")]
    Singular,
    /// Two operands have incompatible dimensions.
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    /// A functional weight failed validation.
    #[error("invalid functional weight: {reason}")]
    InvalidWeight { reason: String },
    /// An empty (0 x 0) matrix was supplied where n >= 1 is required.
    #[error("matrix dimension must be at least 1")]
    Empty,
}

/// Square complex matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    m: DMatrix<C64>,
}

impl CMatrix {
    /// Wraps a square `DMatrix`, rejecting non-square shapes and non-finite entries.
    pub fn new(m: DMatrix<C64>) -> Result<Self, MatError> {
        if m.nrows() != m.ncols() {
            return Err(MatError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(MatError::Empty);
        }
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let z = m[(i, j)];
                if !z.re.is_finite() || !z.im.is_finite() {
                    return Err(MatError::NonFinite { row: i, col: j });
                }
            }
        }
        Ok(CMatrix { m })
    }

    /// Builds an n x n matrix from a generator over (row, col).
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> C64) -> Result<Self, MatError> {
        Self::new(DMatrix::from_fn(n, n, f))
    }

    /// Builds a matrix from row-major real entries.
    pub fn from_real_rows(n: usize, rows: &[f64]) -> Result<Self, MatError> {
        if rows.len() != n * n {
            return Err(MatError::DimensionMismatch {
                left: rows.len(),
                right: n * n,
            });
        }
        Self::from_fn(n, |i, j| C64::new(rows[i * n + j], 0.0))
    }

    /// Identity matrix of dimension n.
    pub fn identity(n: usize) -> Self {
        CMatrix {
            m: DMatrix::identity(n, n),
        }
    }

    /// Zero matrix of dimension n.
    pub fn zeros(n: usize) -> Self {
        CMatrix {
            m: DMatrix::zeros(n, n),
        }
    }

    /// Diagonal matrix with the given real diagonal.
    pub fn diag_real(d: &[f64]) -> Self {
        let n = d.len();
        CMatrix {
            m: DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    C64::new(d[i], 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            }),
        }
    }

    /// Matrix dimension n.
    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    /// Entry accessor.
    pub fn entry(&self, i: usize, j: usize) -> C64 {
        self.m[(i, j)]
    }

    /// Borrow of the underlying storage.
    pub fn raw(&self) -> &DMatrix<C64> {
        &self.m
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        CMatrix {
            m: self.m.adjoint(),
        }
    }

    /// Matrix trace.
    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.m.norm()
    }

    /// True when all entries are finite (can be violated by arithmetic overflow).
    pub fn is_finite(&self) -> bool {
        self.m
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Relative Hermiticity defect `||M - M*||_F / ||M||_F` (zero matrix gives 0).
    pub fn hermiticity_defect(&self) -> f64 {
        let scale = self.norm();
        if scale == 0.0 {
            return 0.0;
        }
        (&self.m - self.m.adjoint()).norm() / scale
    }

    /// True when the matrix is Hermitian within [`EPS_HERM`].
    pub fn is_hermitian(&self) -> bool {
        self.hermiticity_defect() <= EPS_HERM
    }

    /// Entrywise scaling by a real factor.
    pub fn scale(&self, s: f64) -> Self {
        CMatrix {
            m: self.m.map(|z| z * s),
        }
    }

    /// Entrywise scaling by a complex factor.
    pub fn scale_c(&self, s: C64) -> Self {
        CMatrix {
            m: self.m.map(|z| z * s),
        }
    }

    /// Matrix sum (dimensions must match).
    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch in add");
        CMatrix {
            m: &self.m + &other.m,
        }
    }

    /// Matrix difference.
    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch in sub");
        CMatrix {
            m: &self.m - &other.m,
        }
    }

    /// Matrix product.
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch in mul");
        CMatrix {
            m: &self.m * &other.m,
        }
    }

    /// Inverse via LU decomposition; [`MatError::Singular`] when the matrix is
    /// singular within [`EPS_SING`] (checked on the singular-value ratio).
    pub fn inverse(&self) -> Result<Self, MatError> {
        let sv = self.singular_values();
        let smax = sv.first().copied().unwrap_or(0.0);
        let smin = sv.last().copied().unwrap_or(0.0);
        if smax == 0.0 || smin <= EPS_SING * smax {
            return Err(MatError::Singular);
        }
        self.m
            .clone()
            .lu()
            .try_inverse()
            .map(|m| CMatrix { m })
            .ok_or(MatError::Singular)
    }

    /// Singular values in descending order.
    pub fn singular_values(&self) -> Vec<f64> {
        let svd = self.m.clone().svd(false, false);
        let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        sv
    }

    /// Numerical rank with relative threshold `eps * sigma_max`.
    pub fn rank(&self, eps: f64) -> usize {
        let sv = self.singular_values();
        let smax = sv.first().copied().unwrap_or(0.0);
        if smax == 0.0 {
            return 0;
        }
        sv.iter().filter(|&&s| s > eps * smax).count()
    }

    /// Moore-Penrose pseudo-inverse with relative threshold `eps * sigma_max`.
    pub fn pseudo_inverse(&self, eps: f64) -> Result<Self, MatError> {
        let svd = self.m.clone().svd(true, true);
        let smax = svd
            .singular_values
            .iter()
            .cloned()
            .fold(0.0f64, f64::max);
        // An absolute cutoff of 0 on a zero matrix is fine: the pseudo-inverse is 0.
        let cutoff = eps * smax;
        svd.pseudo_inverse(cutoff)
            .map(|m| CMatrix { m })
            .map_err(|_| MatError::Singular)
    }

    /// `log |det M|` together with the determinant phase factor (unit modulus).
    ///
    /// Computed from a partial-pivot LU in log space so that it neither
    /// overflows nor underflows for strongly scaled matrices. A numerically
    /// zero pivot yields `(f64::NEG_INFINITY, 0)`.
    pub fn log_det(&self) -> (f64, C64) {
        let n = self.dim();
        let mut a = self.m.clone();
        let mut log_abs = 0.0f64;
        let mut phase = C64::new(1.0, 0.0);
        for k in 0..n {
            // Partial pivoting on column k.
            let mut pivot_row = k;
            let mut pivot_mag = a[(k, k)].norm();
            for i in (k + 1)..n {
                let mag = a[(i, k)].norm();
                if mag > pivot_mag {
                    pivot_mag = mag;
                    pivot_row = i;
                }
            }
            if pivot_mag == 0.0 {
                return (f64::NEG_INFINITY, C64::new(0.0, 0.0));
            }
            if pivot_row != k {
                a.swap_rows(pivot_row, k);
                phase = -phase;
            }
            let pivot = a[(k, k)];
            log_abs += pivot.norm().ln();
            phase *= pivot / pivot.norm();
            for i in (k + 1)..n {
                let factor = a[(i, k)] / pivot;
                for j in k..n {
                    let akj = a[(k, j)];
                    a[(i, j)] -= factor * akj;
                }
            }
        }
        (log_abs, phase)
    }
}

/// Hermitian part `(M + M*) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    CMatrix {
        m: (&m.m + m.m.adjoint()).map(|z| z * 0.5),
    }
}

/// Skew part `(M - M*) / (2i)`; this is itself Hermitian, and
/// `M = hermitian_part(M) + i * skew_part(M)`.
pub fn skew_part(m: &CMatrix) -> CMatrix {
    let half_over_i = C64::new(0.0, -0.5); // 1/(2i)
    CMatrix {
        m: (&m.m - m.m.adjoint()).map(|z| z * half_over_i),
    }
}

/// Eigenvalues of a Hermitian matrix, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Eigenvalues sorted ascending, so `values[0]` is the smallest.
    pub values: Vec<f64>,
}

impl Spectrum {
    /// Smallest eigenvalue.
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    /// Largest eigenvalue.
    pub fn max(&self) -> f64 {
        *self.values.last().unwrap()
    }
}

fn check_hermitian(h: &CMatrix) -> Result<(), MatError> {
    let defect = h.hermiticity_defect();
    if defect > EPS_HERM {
        return Err(MatError::NotHermitian { defect });
    }
    Ok(())
}

/// Eigenvalues of a Hermitian matrix, sorted ascending.
///
/// Non-Hermitian inputs (relative defect above [`EPS_HERM`]) are rejected; the
/// decomposition itself is performed on the Hermitian part so that roundoff
/// asymmetry cannot leak into the result.
pub fn eig_hermitian(h: &CMatrix) -> Result<Spectrum, MatError> {
    check_hermitian(h)?;
    let sym = hermitian_part(h);
    let eig = sym.m.symmetric_eigen();
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(Spectrum { values })
}

/// Eigen decomposition of a Hermitian matrix: ascending eigenvalues plus the
/// matching unitary column basis.
pub fn eig_hermitian_full(h: &CMatrix) -> Result<(Spectrum, CMatrix), MatError> {
    check_hermitian(h)?;
    let sym = hermitian_part(h);
    let eig = sym.m.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let n = h.dim();
    let values: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok((Spectrum { values }, CMatrix { m: vectors }))
}

/// Principal square root of a Hermitian PSD matrix.
///
/// Eigenvalues in `[-EPS_PSD * scale, 0)` are clamped to zero; anything more
/// negative is rejected as not PSD. The result is re-Hermitized to remove
/// rounding asymmetry, and satisfies `||R^2 - H|| <= ~1e-10 ||H||`.
pub fn sqrt_psd(h: &CMatrix) -> Result<CMatrix, MatError> {
    let (spec, v) = eig_hermitian_full(h)?;
    let scale = spec.values.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()));
    let floor = -EPS_PSD * scale.max(1.0);
    if spec.min() < floor {
        return Err(MatError::NotPsd {
            lambda_min: spec.min(),
        });
    }
    let n = h.dim();
    let root = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            C64::new(spec.values[i].max(0.0).sqrt(), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let r = &v.m * root * v.m.adjoint();
    Ok(hermitian_part(&CMatrix { m: r }))
}

/// A positive linear trace functional `g(M) = tr(W M)`.
///
/// The weight `W` must be Hermitian PSD with positive trace; it is normalized
/// to `tr W = 1` on construction, which pins the bracket
/// `lambda_min(D) <= g(D) <= lambda_max(D)` for Hermitian `D`.
#[derive(Debug, Clone)]
pub struct FunctionalSpec {
    weight: CMatrix,
}

impl FunctionalSpec {
    /// Validates and normalizes a weight matrix.
    pub fn new(weight: CMatrix) -> Result<Self, MatError> {
        if !weight.is_hermitian() {
            return Err(MatError::InvalidWeight {
                reason: format!(
                    "weight is not Hermitian (relative defect {:.3e})",
                    weight.hermiticity_defect()
                ),
            });
        }
        let spec = eig_hermitian(&weight)?;
        let scale = spec.max().abs().max(1.0);
        if spec.min() < -EPS_PSD * scale {
            return Err(MatError::InvalidWeight {
                reason: format!("weight has negative eigenvalue {:.6e}", spec.min()),
            });
        }
        let tr = weight.trace().re;
        if tr <= EPS_SING {
            return Err(MatError::InvalidWeight {
                reason: format!("weight trace {tr:.6e} is not positive"),
            });
        }
        Ok(FunctionalSpec {
            weight: weight.scale(1.0 / tr),
        })
    }

    /// The uniform functional with weight `I/n`, i.e. the normalized trace.
    pub fn uniform(n: usize) -> Self {
        FunctionalSpec {
            weight: CMatrix::identity(n).scale(1.0 / n as f64),
        }
    }

    /// The normalized weight matrix.
    pub fn weight(&self) -> &CMatrix {
        &self.weight
    }

    /// Weight dimension.
    pub fn dim(&self) -> usize {
        self.weight.dim()
    }
}

/// Evaluates `g(M) = tr(W M)` for Hermitian `M` (real by construction).
pub fn functional(g: &FunctionalSpec, m: &CMatrix) -> Result<f64, MatError> {
    if g.dim() != m.dim() {
        return Err(MatError::DimensionMismatch {
            left: g.dim(),
            right: m.dim(),
        });
    }
    check_hermitian(m)?;
    Ok(g.weight.mul(m).trace().re)
}

/// `nu_g(M)`: zero when the Hermitian PSD matrix `M` is singular, otherwise
/// `1 / g(M^{-1})`.
///
/// Singularity is decided on the eigenvalue ratio `lambda_min <= EPS_SING *
/// lambda_max`, and the inverse is formed spectrally so the reciprocal stays
/// stable near the singular cutoff.
pub fn nu_g(g: &FunctionalSpec, m: &CMatrix) -> Result<f64, MatError> {
    if g.dim() != m.dim() {
        return Err(MatError::DimensionMismatch {
            left: g.dim(),
            right: m.dim(),
        });
    }
    let (spec, v) = eig_hermitian_full(m)?;
    let scale = spec.max().abs().max(1.0);
    if spec.min() < -EPS_PSD * scale {
        return Err(MatError::NotPsd {
            lambda_min: spec.min(),
        });
    }
    if spec.min() <= EPS_SING * spec.max().max(0.0) {
        return Ok(0.0);
    }
    let n = m.dim();
    let inv_diag = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            C64::new(1.0 / spec.values[i], 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let inv = CMatrix {
        m: &v.m * inv_diag * v.m.adjoint(),
    };
    let g_inv = functional(g, &hermitian_part(&inv))?;
    Ok(1.0 / g_inv)
}

/// `nu_0(B)`: zero when the Hermitian PSD matrix `B` is singular, otherwise
/// `1 / tr(B^{-1})`. This is `nu_g` for the plain trace functional and obeys
/// `nu_0(B) <= lambda_min(B) <= n * nu_0(B)` for nonsingular PSD `B`.
pub fn nu_0(b: &CMatrix) -> Result<f64, MatError> {
    let spec = eig_hermitian(b)?;
    let scale = spec.max().abs().max(1.0);
    if spec.min() < -EPS_PSD * scale {
        return Err(MatError::NotPsd {
            lambda_min: spec.min(),
        });
    }
    if spec.min() <= EPS_SING * spec.max().max(0.0) {
        return Ok(0.0);
    }
    let tr_inv: f64 = spec.values.iter().map(|&l| 1.0 / l).sum();
    Ok(1.0 / tr_inv)
}

/// Lower bound for `tr(S H S*)` with `H` Hermitian PSD:
///
/// ```text
/// tr(S H S*) >= (lambda_min(H) / n) * ( [tr hermitian_part(S)]^2
///                                     + [tr skew_part(S)]^2 )
/// ```
///
/// Returns the right-hand side; callers asserting the inequality should allow
/// [`EPS_INEQ`] slack.
pub fn trace_quad_lower_bound(s: &CMatrix, h: &CMatrix) -> Result<f64, MatError> {
    if s.dim() != h.dim() {
        return Err(MatError::DimensionMismatch {
            left: s.dim(),
            right: h.dim(),
        });
    }
    let spec = eig_hermitian(h)?;
    let scale = spec.max().abs().max(1.0);
    if spec.min() < -EPS_PSD * scale {
        return Err(MatError::NotPsd {
            lambda_min: spec.min(),
        });
    }
    let n = s.dim() as f64;
    let tr_herm = hermitian_part(s).trace().re;
    let tr_skew = skew_part(s).trace().re;
    Ok(spec.min() / n * (tr_herm * tr_herm + tr_skew * tr_skew))
}
