//! Adaptive integration of the matrix system, its scalar reduction, and the
//! associated Riccati equations, with determinant-zero scanning, conjoined-
//! defect monitoring, and finite-time blow-up (escape) detection.
//!
//! The matrix system integrated here is
//!
//! ```text
//! Φ' = A(t)Φ + B(t)Ψ
//! Ψ' = C(t)Φ + (μ(t)I − A*(t))Ψ
//! ```
//!
//! Because the system is linear, trajectories that grow past a norm threshold
//! are jointly rescaled by a positive scalar; the factors are logged and all
//! reported monitors are either scale-invariant (singular-value ratio) or
//! unwound to the original scale (conjoined defect, determinant modulus).

pub mod rk;

use nalgebra::{DMatrix, DVector};

use crate::coeffs::{CoeffError, ScalarSystemSpec, SystemSpec};
use crate::matlin::{CMatrix, C64};
use rk::{Control, RkError, RkOpts};

/// Tolerances and thresholds for one integration run.
#[derive(Debug, Clone)]
pub struct IntegratorOpts {
    pub rtol: f64,
    pub atol: f64,
    /// Joint rescaling threshold on ‖Φ‖_F + ‖Ψ‖_F.
    pub rescale_threshold: f64,
    /// Riccati escape threshold on the solution norm.
    pub escape_threshold: f64,
    pub max_steps: usize,
    pub h_max: Option<f64>,
}

impl Default for IntegratorOpts {
    fn default() -> Self {
        IntegratorOpts {
            rtol: 1e-9,
            atol: 1e-12,
            rescale_threshold: 1e8,
            escape_threshold: 1e10,
            max_steps: 5_000_000,
            h_max: None,
        }
    }
}

impl IntegratorOpts {
    pub(crate) fn rk(&self) -> RkOpts {
        RkOpts {
            rtol: self.rtol,
            atol: self.atol,
            h_max: self.h_max,
            max_steps: self.max_steps,
        }
    }
}

/// Integration failure.
#[derive(Debug, Clone, thiserror::Error)]
pub enum IntegrateError {
    #[error("coefficient evaluation failed: {0}")]
    Coeff(#[from] CoeffError),
    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },
    #[error("step budget exhausted at t = {t}")]
    MaxSteps { t: f64 },
    #[error("scale function p(t) = {value} is not positive at t = {t}")]
    NonPositiveP { t: f64, value: f64 },
    #[error("invalid input: {0}")]
    BadInput(String),
}

fn map_rk_err(e: RkError<IntegrateError>) -> IntegrateError {
    match e {
        RkError::StepSizeUnderflow { t } => IntegrateError::StepSizeUnderflow { t },
        RkError::MaxSteps { t } => IntegrateError::MaxSteps { t },
        RkError::Rhs { source, .. } => source,
    }
}

// ---------------------------------------------------------------------------
// Matrix-system trajectory
// ---------------------------------------------------------------------------

/// One dense-output segment (states in stored scale; constant scale inside).
#[derive(Debug, Clone)]
pub(crate) struct Seg {
    pub(crate) t0: f64,
    pub(crate) t1: f64,
    pub(crate) y0: DVector<C64>,
    pub(crate) f0: DVector<C64>,
    pub(crate) y1: DVector<C64>,
    pub(crate) f1: DVector<C64>,
    /// ln of the factor relating the stored representation on this segment to
    /// the original-scale solution (stored = original · exp(ln_scale)).
    pub(crate) ln_scale: f64,
}

impl Seg {
    pub(crate) fn eval(&self, t: f64) -> DVector<C64> {
        rk::hermite_eval(self.t0, self.t1, &self.y0, &self.f0, &self.y1, &self.f1, t)
    }
}

/// Adaptive solution of the matrix system with per-node monitors.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Accepted-step node times (strictly increasing, starts at t0).
    pub times: Vec<f64>,
    /// Stored-scale state pairs (Φ, Ψ) at the nodes.
    pub states: Vec<(CMatrix, CMatrix)>,
    /// Scale-invariant singularity monitor σ_min(Φ)/σ_max([Φ; Ψ]) per node.
    pub sigma_min_ratio: Vec<f64>,
    /// ‖Φ*Ψ − Ψ*Φ‖_F per node in the original (unscaled) representation,
    /// saturating at `f64::MAX`.
    pub conjoined_defect: Vec<f64>,
    /// Joint rescaling events as (time, factor applied).
    pub rescale_log: Vec<(f64, f64)>,
    pub(crate) n: usize,
    /// ln of stored/original scale in force at each node.
    pub(crate) node_ln_scale: Vec<f64>,
    /// log|det Φ_stored| per node (−∞ when exactly singular).
    pub(crate) det_logabs: Vec<f64>,
    /// Phase of det Φ per node (unit modulus, or 0 when singular).
    pub(crate) det_phase: Vec<C64>,
    /// All coefficients and initial data numerically real: determinant sign
    /// changes are meaningful.
    pub(crate) real_system: bool,
    pub(crate) segs: Vec<Seg>,
}

pub(crate) fn pack(phi: &DMatrix<C64>, psi: &DMatrix<C64>) -> DVector<C64> {
    let n = phi.nrows();
    let mut v = DVector::from_element(2 * n * n, C64::new(0.0, 0.0));
    v.as_mut_slice()[..n * n].copy_from_slice(phi.as_slice());
    v.as_mut_slice()[n * n..].copy_from_slice(psi.as_slice());
    v
}

pub(crate) fn unpack(y: &DVector<C64>, n: usize) -> (DMatrix<C64>, DMatrix<C64>) {
    let phi = DMatrix::from_column_slice(n, n, &y.as_slice()[..n * n]);
    let psi = DMatrix::from_column_slice(n, n, &y.as_slice()[n * n..]);
    (phi, psi)
}

/// σ_min(Φ) / σ_max of the stacked 2n×n matrix [Φ; Ψ]; scale-invariant and
/// zero exactly when Φ is singular (the stack has full column rank for any
/// nontrivial solution).
pub(crate) fn sigma_ratio(phi: &DMatrix<C64>, psi: &DMatrix<C64>) -> f64 {
    let n = phi.ncols();
    let mut stack = DMatrix::from_element(2 * n, n, C64::new(0.0, 0.0));
    stack.view_mut((0, 0), (n, n)).copy_from(phi);
    stack.view_mut((n, 0), (n, n)).copy_from(psi);
    let smax = stack.singular_values().max();
    if smax <= 0.0 || !smax.is_finite() {
        return 0.0;
    }
    let smin_phi = phi
        .clone()
        .singular_values()
        .as_slice()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    (smin_phi / smax).max(0.0)
}

pub(crate) fn frob(slice: &[C64]) -> f64 {
    slice.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Defect in the original scale, computed in log space to dodge overflow.
pub(crate) fn rescaled_defect(defect_stored: f64, ln_scale: f64) -> f64 {
    if defect_stored == 0.0 {
        return 0.0;
    }
    let ln = defect_stored.ln() - 2.0 * ln_scale;
    if ln > 700.0 {
        f64::MAX
    } else {
        ln.exp()
    }
}

impl Trajectory {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Whether determinant sign tracking is meaningful (real data throughout).
    pub fn is_real_system(&self) -> bool {
        self.real_system
    }

    /// log|det Φ(t_k)| in the original scale (−∞ at exact zeros).
    pub fn det_logabs_original(&self, k: usize) -> f64 {
        self.det_logabs[k] - self.n as f64 * self.node_ln_scale[k]
    }

    /// Unit-modulus phase of det Φ(t_k) (0 when singular).
    pub fn det_phase(&self, k: usize) -> C64 {
        self.det_phase[k]
    }

    /// ln of stored/original scale at node k.
    pub fn node_ln_scale(&self, k: usize) -> f64 {
        self.node_ln_scale[k]
    }

    fn seg_index(&self, t: f64) -> usize {
        match self
            .segs
            .binary_search_by(|s| s.t1.partial_cmp(&t).unwrap())
        {
            Ok(i) => i,
            Err(i) => i.min(self.segs.len().saturating_sub(1)),
        }
    }

    /// Stored-scale dense-output states at an arbitrary time inside the horizon.
    pub fn eval_stored(&self, t: f64) -> (CMatrix, CMatrix) {
        assert!(!self.segs.is_empty(), "trajectory has no interior");
        let s = &self.segs[self.seg_index(t)];
        let y = s.eval(t);
        let (phi, psi) = unpack(&y, self.n);
        (
            CMatrix::new(phi).expect("dense states are finite"),
            CMatrix::new(psi).expect("dense states are finite"),
        )
    }

    /// Stored-scale states together with their time derivatives at `t`.
    ///
    /// At stored node times the derivatives are exactly the right-hand-side
    /// values recorded during integration, so residual checks against the
    /// differential system see node accuracy rather than interpolation error;
    /// between nodes they are the cubic interpolant's derivatives.
    #[allow(clippy::type_complexity)]
    pub fn eval_stored_with_derivative(
        &self,
        t: f64,
    ) -> ((CMatrix, CMatrix), (CMatrix, CMatrix)) {
        assert!(!self.segs.is_empty(), "trajectory has no interior");
        let s = &self.segs[self.seg_index(t)];
        let y = s.eval(t);
        let d = rk::hermite_eval_deriv(s.t0, s.t1, &s.y0, &s.f0, &s.y1, &s.f1, t);
        let (phi, psi) = unpack(&y, self.n);
        let (dphi, dpsi) = unpack(&d, self.n);
        (
            (
                CMatrix::new(phi).expect("dense states are finite"),
                CMatrix::new(psi).expect("dense states are finite"),
            ),
            (
                CMatrix::new(dphi).expect("dense derivatives are finite"),
                CMatrix::new(dpsi).expect("dense derivatives are finite"),
            ),
        )
    }

    /// ln of stored/original scale in force at time `t`.
    pub fn ln_scale_at(&self, t: f64) -> f64 {
        if self.segs.is_empty() {
            return self.node_ln_scale[0];
        }
        self.segs[self.seg_index(t)].ln_scale
    }

    /// Original-scale states (may overflow for strongly grown solutions; callers
    /// use this in moderate ranges only).
    pub fn eval_original(&self, t: f64) -> (CMatrix, CMatrix) {
        let (phi, psi) = self.eval_stored(t);
        let s = (-self.ln_scale_at(t)).exp();
        (phi.scale(s), psi.scale(s))
    }

    fn ratio_at(&self, t: f64) -> f64 {
        let s = &self.segs[self.seg_index(t)];
        let y = s.eval(t);
        let (phi, psi) = unpack(&y, self.n);
        sigma_ratio(&phi, &psi)
    }

    /// Sign of det Φ at time `t` (dense output): −1, 0, or +1. Only meaningful
    /// for real systems.
    fn det_sign_at(&self, t: f64) -> f64 {
        let s = &self.segs[self.seg_index(t)];
        let y = s.eval(t);
        let (phi, _) = unpack(&y, self.n);
        let m = CMatrix::new(phi).expect("dense states are finite");
        let (logabs, phase) = m.log_det();
        if logabs == f64::NEG_INFINITY {
            0.0
        } else if phase.re > 0.0 {
            1.0
        } else if phase.re < 0.0 {
            -1.0
        } else {
            0.0
        }
    }
}

/// Integrate the matrix system from `(Φ₀, Ψ₀)` at `spec.t0` to `t_end`.
pub fn integrate_system(
    spec: &SystemSpec,
    phi0: &CMatrix,
    psi0: &CMatrix,
    t_end: f64,
    opts: &IntegratorOpts,
) -> Result<Trajectory, IntegrateError> {
    let n = spec.n;
    if phi0.dim() != n || psi0.dim() != n {
        return Err(IntegrateError::BadInput(format!(
            "initial matrices are {}×{} / {}×{} but the system dimension is {n}",
            phi0.dim(),
            phi0.dim(),
            psi0.dim(),
            psi0.dim()
        )));
    }
    if !(t_end > spec.t0) {
        return Err(IntegrateError::BadInput(format!(
            "horizon {t_end} must exceed the start time {}",
            spec.t0
        )));
    }

    let initial_real = phi0.raw().iter().chain(psi0.raw().iter()).all(|z| {
        z.im.abs() <= 1e-12 * (1.0 + z.re.abs())
    });
    let real_system = spec.probably_real() && initial_real;

    let mut y0 = pack(phi0.raw(), psi0.raw());

    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        sigma_min_ratio: Vec::new(),
        conjoined_defect: Vec::new(),
        rescale_log: Vec::new(),
        n,
        node_ln_scale: Vec::new(),
        det_logabs: Vec::new(),
        det_phase: Vec::new(),
        real_system,
        segs: Vec::new(),
    };

    let mut ln_scale = 0.0f64;

    // Initial rescale if the data already exceeds the threshold.
    let norm0 = frob(&y0.as_slice()[..n * n]) + frob(&y0.as_slice()[n * n..]);
    if norm0 > opts.rescale_threshold {
        let s = 1.0 / norm0;
        y0 *= C64::new(s, 0.0);
        ln_scale += s.ln();
        traj.rescale_log.push((spec.t0, s));
    }

    let record_node = |traj: &mut Trajectory, t: f64, y: &DVector<C64>, ln_scale: f64| {
        let (phi, psi) = unpack(y, n);
        let phi_m = CMatrix::new(phi.clone()).expect("accepted states are finite");
        let psi_m = CMatrix::new(psi.clone()).expect("accepted states are finite");
        let ratio = sigma_ratio(&phi, &psi);
        let defect_stored = {
            let d = phi_m.adjoint().mul(&psi_m).sub(&psi_m.adjoint().mul(&phi_m));
            d.norm()
        };
        let (logabs, phase) = phi_m.log_det();
        traj.times.push(t);
        traj.states.push((phi_m, psi_m));
        traj.sigma_min_ratio.push(ratio);
        traj.conjoined_defect
            .push(rescaled_defect(defect_stored, ln_scale));
        traj.node_ln_scale.push(ln_scale);
        traj.det_logabs.push(logabs);
        traj.det_phase.push(if logabs == f64::NEG_INFINITY {
            C64::new(0.0, 0.0)
        } else {
            phase
        });
    };

    record_node(&mut traj, spec.t0, &y0, ln_scale);

    let mut rhs = |t: f64, y: &DVector<C64>| -> Result<DVector<C64>, IntegrateError> {
        let a = spec.eval_a(t)?;
        let b = spec.eval_b(t)?;
        let c = spec.eval_c(t)?;
        let mu = spec.eval_mu(t)?;
        let (phi, psi) = unpack(y, n);
        let dphi = a.raw() * &phi + b.raw() * &psi;
        let dpsi = c.raw() * &phi + &psi * C64::new(mu, 0.0) - a.raw().adjoint() * &psi;
        Ok(pack(&dphi, &dpsi))
    };

    let threshold = opts.rescale_threshold;
    let mut pending: Vec<(f64, f64)> = Vec::new(); // rescale events during stepping
    {
        let traj_ref = &mut traj;
        let pending_ref = &mut pending;
        let mut ln_scale_run = ln_scale;
        rk::solve(
            &mut rhs,
            spec.t0,
            y0,
            t_end,
            &opts.rk(),
            &mut |s: rk::Step<'_>| {
                record_node(traj_ref, s.t1, s.y1, ln_scale_run);
                traj_ref.segs.push(Seg {
                    t0: s.t0,
                    t1: s.t1,
                    y0: s.y0.clone(),
                    f0: s.f0.clone(),
                    y1: s.y1.clone(),
                    f1: s.f1.clone(),
                    ln_scale: ln_scale_run,
                });
                let norm = frob(&s.y1.as_slice()[..n * n]) + frob(&s.y1.as_slice()[n * n..]);
                if norm > threshold {
                    let factor = 1.0 / norm;
                    ln_scale_run += factor.ln();
                    pending_ref.push((s.t1, factor));
                    Control::Rescale(factor)
                } else {
                    Control::Continue
                }
            },
        )
        .map_err(map_rk_err)?;
    }
    traj.rescale_log.extend(pending);
    Ok(traj)
}

// ---------------------------------------------------------------------------
// Determinant-zero scanning
// ---------------------------------------------------------------------------

/// How a determinant zero was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZeroKind {
    SignChange,
    Dip,
}

/// One detected zero of det Φ.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ZeroRecord {
    pub t_zero: f64,
    /// Singularity-monitor value at the refined location.
    pub sigma_ratio_min: f64,
    pub kind: ZeroKind,
}

/// Zeros plus borderline local minima worth surfacing as warnings.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ZeroScan {
    pub zeros: Vec<ZeroRecord>,
    /// Local minima of the monitor above the threshold but within 10³ of it.
    pub near_misses: Vec<ZeroRecord>,
}

const ZERO_T_TOL: f64 = 1e-6;
/// Golden-section refinement tolerance: tighter than the reported location
/// tolerance so that touching (non-crossing) zeros dip well below ζ.
const DIP_REFINE_TOL: f64 = 1e-8;
/// A dip must be this much shallower than its flanks; rejects singular-value
/// noise-floor wiggles on strongly grown solutions.
const DIP_PROMINENCE: f64 = 50.0;

fn golden_min(mut a: f64, mut b: f64, f: &dyn Fn(f64) -> f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a) > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let t = 0.5 * (a + b);
    (t, f(t))
}

fn bisect_sign(mut a: f64, mut b: f64, f: &dyn Fn(f64) -> f64, tol: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        if b - a <= tol {
            break;
        }
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fa * fm < 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    0.5 * (a + b)
}

/// Full scan: accepted zeros and near-miss warnings.
pub fn scan_det_zeros(traj: &Trajectory, zeta: f64) -> ZeroScan {
    assert!(!traj.times.is_empty(), "empty trajectory");
    assert!(zeta > 0.0 && zeta < 1.0, "zero threshold must be in (0,1)");
    let m = traj.times.len();
    let mut zeros: Vec<ZeroRecord> = Vec::new();
    let mut near: Vec<ZeroRecord> = Vec::new();

    // Sign changes of det Φ (real systems only; exact for simple crossings).
    if traj.real_system && m >= 2 {
        let sign = |k: usize| -> f64 {
            if traj.det_logabs[k] == f64::NEG_INFINITY {
                0.0
            } else {
                traj.det_phase[k].re.signum()
            }
        };
        for k in 0..m - 1 {
            let (s0, s1) = (sign(k), sign(k + 1));
            if s0 == 0.0 {
                // Exact zero on a node (only record once, via the left end).
                zeros.push(ZeroRecord {
                    t_zero: traj.times[k],
                    sigma_ratio_min: traj.sigma_min_ratio[k],
                    kind: ZeroKind::SignChange,
                });
            } else if s0 * s1 < 0.0 {
                let f = |t: f64| traj.det_sign_at(t);
                let t_z = bisect_sign(traj.times[k], traj.times[k + 1], &f, ZERO_T_TOL);
                zeros.push(ZeroRecord {
                    t_zero: t_z,
                    sigma_ratio_min: traj.ratio_at(t_z),
                    kind: ZeroKind::SignChange,
                });
            }
        }
        let last = m - 1;
        if sign(last) == 0.0 {
            zeros.push(ZeroRecord {
                t_zero: traj.times[last],
                sigma_ratio_min: traj.sigma_min_ratio[last],
                kind: ZeroKind::SignChange,
            });
        }
    }

    // Dips of the singularity monitor. Every local minimum below a fixed
    // geometric cut is refined; classification against ζ happens only after
    // refinement, because nodal values near a sharp dip can sit far above it
    // when the step size is large.
    let r = &traj.sigma_min_ratio;
    let coarse_cut = 0.5;
    let mut candidates: Vec<(usize, f64, f64)> = Vec::new(); // (index, bracket lo, bracket hi)
    for k in 0..m {
        let is_min = if m == 1 {
            true
        } else if k == 0 {
            r[0] < r[1]
        } else if k == m - 1 {
            r[k] < r[k - 1]
        } else {
            r[k] <= r[k - 1] && r[k] <= r[k + 1] && (r[k] < r[k - 1] || r[k] < r[k + 1])
        };
        if is_min && r[k] <= coarse_cut {
            let lo = traj.times[k.saturating_sub(1)];
            let hi = traj.times[(k + 1).min(m - 1)];
            candidates.push((k, lo, hi));
        }
    }
    for (k, lo, hi) in candidates {
        let (t_min, r_min) = if hi > lo && !traj.segs.is_empty() {
            let f = |t: f64| traj.ratio_at(t);
            golden_min(lo, hi, &f, DIP_REFINE_TOL)
        } else {
            (traj.times[k], r[k])
        };
        let flank_lo = if k > 0 { r[k - 1] } else { f64::INFINITY };
        let flank_hi = if k + 1 < m { r[k + 1] } else { f64::INFINITY };
        let flank = flank_lo.min(flank_hi);
        let prominent = flank / r_min.max(1e-300) >= DIP_PROMINENCE;
        if r_min <= zeta && prominent {
            zeros.push(ZeroRecord {
                t_zero: t_min,
                sigma_ratio_min: r_min,
                kind: ZeroKind::Dip,
            });
        } else if r_min > zeta && r_min <= 1e3 * zeta {
            near.push(ZeroRecord {
                t_zero: t_min,
                sigma_ratio_min: r_min,
                kind: ZeroKind::Dip,
            });
        }
    }

    // Order and deduplicate (prefer sign-change records; they are exact).
    zeros.sort_by(|a, b| a.t_zero.partial_cmp(&b.t_zero).unwrap());
    let mut deduped: Vec<ZeroRecord> = Vec::new();
    for z in zeros {
        match deduped.last() {
            Some(prev) if (z.t_zero - prev.t_zero).abs() <= 10.0 * ZERO_T_TOL => {
                if prev.kind == ZeroKind::Dip && z.kind == ZeroKind::SignChange {
                    *deduped.last_mut().unwrap() = z;
                }
            }
            _ => deduped.push(z),
        }
    }
    // Drop near-misses that sit on accepted zeros.
    near.retain(|nm| {
        deduped
            .iter()
            .all(|z| (z.t_zero - nm.t_zero).abs() > 10.0 * ZERO_T_TOL)
    });
    near.sort_by(|a, b| a.t_zero.partial_cmp(&b.t_zero).unwrap());

    ZeroScan { zeros: deduped, near_misses: near }
}

/// Zeros of det Φ along the trajectory (see [`scan_det_zeros`] for warnings).
pub fn detect_det_zeros(traj: &Trajectory, zeta: f64) -> Vec<ZeroRecord> {
    scan_det_zeros(traj, zeta).zeros
}

// ---------------------------------------------------------------------------
// Scalar system
// ---------------------------------------------------------------------------

/// Solution of the two-dimensional scalar system with φ-zero records.
#[derive(Debug, Clone)]
pub struct ScalarTrajectory {
    pub times: Vec<f64>,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    /// Zeros of φ (sign changes refined by bisection to 1e−6).
    pub zeros: Vec<f64>,
    segs: Vec<Seg>,
}

impl ScalarTrajectory {
    fn seg_index(&self, t: f64) -> usize {
        match self
            .segs
            .binary_search_by(|s| s.t1.partial_cmp(&t).unwrap())
        {
            Ok(i) => i,
            Err(i) => i.min(self.segs.len().saturating_sub(1)),
        }
    }

    /// Dense-output evaluation of (φ, ψ).
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let s = &self.segs[self.seg_index(t)];
        let y = s.eval(t);
        (y[0].re, y[1].re)
    }
}

/// Integrate the scalar system `φ' = a₁₁φ + a₁₂ψ`, `ψ' = a₂₁φ + a₂₂ψ`.
pub fn integrate_scalar_system(
    s: &ScalarSystemSpec,
    phi0: f64,
    psi0: f64,
    t_end: f64,
    opts: &IntegratorOpts,
) -> Result<ScalarTrajectory, IntegrateError> {
    if !(t_end > s.t0) {
        return Err(IntegrateError::BadInput(format!(
            "horizon {t_end} must exceed the start time {}",
            s.t0
        )));
    }
    let mut rhs = |t: f64, y: &DVector<C64>| -> Result<DVector<C64>, IntegrateError> {
        let [a11, a12, a21, a22] = s.eval(t)?;
        Ok(DVector::from_vec(vec![
            y[0] * C64::new(a11, 0.0) + y[1] * C64::new(a12, 0.0),
            y[0] * C64::new(a21, 0.0) + y[1] * C64::new(a22, 0.0),
        ]))
    };
    let y0 = DVector::from_vec(vec![C64::new(phi0, 0.0), C64::new(psi0, 0.0)]);
    let mut traj = ScalarTrajectory {
        times: vec![s.t0],
        phi: vec![phi0],
        psi: vec![psi0],
        zeros: Vec::new(),
        segs: Vec::new(),
    };
    rk::solve(&mut rhs, s.t0, y0, t_end, &opts.rk(), &mut |st: rk::Step<'_>| {
        traj.times.push(st.t1);
        traj.phi.push(st.y1[0].re);
        traj.psi.push(st.y1[1].re);
        traj.segs.push(Seg {
            t0: st.t0,
            t1: st.t1,
            y0: st.y0.clone(),
            f0: st.f0.clone(),
            y1: st.y1.clone(),
            f1: st.f1.clone(),
            ln_scale: 0.0,
        });
        Control::Continue
    })
    .map_err(map_rk_err)?;

    // φ zeros by sign change + bisection on the dense output.
    let phi_at = |t: f64| traj.eval(t).0;
    let mut zeros = Vec::new();
    for k in 0..traj.times.len() - 1 {
        let (p0, p1) = (traj.phi[k], traj.phi[k + 1]);
        if p0 == 0.0 {
            zeros.push(traj.times[k]);
        } else if p0 * p1 < 0.0 {
            zeros.push(bisect_sign(
                traj.times[k],
                traj.times[k + 1],
                &phi_at,
                ZERO_T_TOL,
            ));
        }
    }
    if let Some(&last) = traj.phi.last() {
        if last == 0.0 {
            zeros.push(*traj.times.last().unwrap());
        }
    }
    traj.zeros = zeros;
    Ok(traj)
}

// ---------------------------------------------------------------------------
// Riccati equations with escape detection
// ---------------------------------------------------------------------------

/// Outcome of watching a Riccati solution for finite-time blow-up.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EscapeReport {
    /// The solution left every bounded set in finite time (norm beyond the
    /// escape threshold with collapsing steps).
    pub escaped: bool,
    pub t_escape: Option<f64>,
    pub norm_at_escape: f64,
    /// The norm exceeded the escape threshold at some point, whether or not a
    /// genuine blow-up was diagnosed ("large" as opposed to "escaped").
    pub threshold_exceeded: bool,
}

/// Hard stop: the integrator halts once the norm passes 100× the escape
/// threshold; beyond that the states risk overflow without adding information.
fn escape_cap(threshold: f64) -> f64 {
    100.0 * threshold
}

fn step_collapse_scale(t: f64) -> f64 {
    1e-7 * t.abs().max(1.0)
}

/// Scalar Riccati solution samples (value and derivative per node).
#[derive(Debug, Clone)]
pub struct RiccatiScalarSeries {
    pub t0: f64,
    pub times: Vec<f64>,
    pub y: Vec<f64>,
    pub y_prime: Vec<f64>,
}

/// Integrate `y' + a₁₂(t)y² + E(t)y − a₂₁(t) = 0` with `E = a₁₁ − a₂₂`,
/// watching for finite-time escape.
pub fn integrate_scalar_riccati(
    s: &ScalarSystemSpec,
    y0: f64,
    t_end: f64,
    opts: &IntegratorOpts,
) -> Result<(RiccatiScalarSeries, EscapeReport), IntegrateError> {
    if !(t_end > s.t0) {
        return Err(IntegrateError::BadInput(format!(
            "horizon {t_end} must exceed the start time {}",
            s.t0
        )));
    }
    let mut rhs = |t: f64, y: &DVector<C64>| -> Result<DVector<C64>, IntegrateError> {
        let [a11, a12, a21, a22] = s.eval(t)?;
        let e = a11 - a22;
        let v = y[0];
        Ok(DVector::from_vec(vec![
            -v * v * C64::new(a12, 0.0) - v * C64::new(e, 0.0) + C64::new(a21, 0.0),
        ]))
    };
    let f0 = rhs(s.t0, &DVector::from_vec(vec![C64::new(y0, 0.0)]))?;
    let mut series = RiccatiScalarSeries {
        t0: s.t0,
        times: vec![s.t0],
        y: vec![y0],
        y_prime: vec![f0[0].re],
    };
    let cap = escape_cap(opts.escape_threshold);
    let mut max_norm = y0.abs();
    let outcome = rk::solve(
        &mut rhs,
        s.t0,
        DVector::from_vec(vec![C64::new(y0, 0.0)]),
        t_end,
        &opts.rk(),
        &mut |st: rk::Step<'_>| {
            series.times.push(st.t1);
            series.y.push(st.y1[0].re);
            series.y_prime.push(st.f1[0].re);
            let norm = st.y1[0].norm();
            max_norm = max_norm.max(norm);
            if norm > cap {
                Control::Stop
            } else {
                Control::Continue
            }
        },
    );
    let report = escape_verdict(outcome, max_norm, opts)?;
    Ok((series, report))
}

/// Matrix Riccati solution samples.
#[derive(Debug, Clone)]
pub struct MatrixRiccatiSeries {
    pub t0: f64,
    pub times: Vec<f64>,
    pub y: Vec<CMatrix>,
    pub y_prime: Vec<CMatrix>,
    /// ‖Y − Y*‖_F per node, recorded when Y₀ is Hermitian (the flow preserves
    /// Hermiticity, so drift measures accumulated integration error).
    pub hermitian_drift: Option<Vec<f64>>,
}

/// Shared escape classification for both Riccati integrators.
fn escape_verdict(
    outcome: Result<rk::RkOutcome, RkError<IntegrateError>>,
    max_norm: f64,
    opts: &IntegratorOpts,
) -> Result<EscapeReport, IntegrateError> {
    match outcome {
        Ok(out) => {
            let norm_final = out
                .y_final
                .iter()
                .map(|z| z.norm_sqr())
                .sum::<f64>()
                .sqrt();
            if out.stopped_early {
                // Norm passed the hard cap; decide between blow-up and mere size.
                if out.h_last < step_collapse_scale(out.t_final) {
                    Ok(EscapeReport {
                        escaped: true,
                        t_escape: Some(out.t_final),
                        norm_at_escape: norm_final,
                        threshold_exceeded: true,
                    })
                } else {
                    Ok(EscapeReport {
                        escaped: false,
                        t_escape: None,
                        norm_at_escape: norm_final,
                        threshold_exceeded: true,
                    })
                }
            } else {
                Ok(EscapeReport {
                    escaped: false,
                    t_escape: None,
                    norm_at_escape: norm_final,
                    threshold_exceeded: max_norm > opts.escape_threshold,
                })
            }
        }
        Err(RkError::StepSizeUnderflow { t }) => {
            if max_norm > 1e-2 * opts.escape_threshold {
                // Steps collapsed while the norm raced upward: finite-time escape.
                Ok(EscapeReport {
                    escaped: true,
                    t_escape: Some(t),
                    norm_at_escape: max_norm,
                    threshold_exceeded: max_norm > opts.escape_threshold,
                })
            } else {
                Err(IntegrateError::StepSizeUnderflow { t })
            }
        }
        Err(e) => Err(map_rk_err(e)),
    }
}

/// Integrate the matrix Riccati flow induced by the linear system through the
/// substitution `Ψ = p·YΦ`:
///
/// ```text
/// Y' = −p·Y B Y − A*Y − Y A − (p'/p − μ)Y + (1/p)C
/// ```
pub fn integrate_matrix_riccati(
    spec: &SystemSpec,
    y0: &CMatrix,
    t_end: f64,
    opts: &IntegratorOpts,
) -> Result<(MatrixRiccatiSeries, EscapeReport), IntegrateError> {
    let n = spec.n;
    if y0.dim() != n {
        return Err(IntegrateError::BadInput(format!(
            "initial matrix is {}×{} but the system dimension is {n}",
            y0.dim(),
            y0.dim()
        )));
    }
    if !(t_end > spec.t0) {
        return Err(IntegrateError::BadInput(format!(
            "horizon {t_end} must exceed the start time {}",
            spec.t0
        )));
    }
    let track_drift = y0.is_hermitian();

    let mut rhs = |t: f64, yv: &DVector<C64>| -> Result<DVector<C64>, IntegrateError> {
        let a = spec.eval_a(t)?;
        let b = spec.eval_b(t)?;
        let c = spec.eval_c(t)?;
        let mu = spec.eval_mu(t)?;
        let p = spec.eval_p(t)?;
        if p <= 0.0 {
            return Err(IntegrateError::NonPositiveP { t, value: p });
        }
        let pp = spec.eval_p_prime(t)?;
        let y = DMatrix::from_column_slice(n, n, yv.as_slice());
        let quad = &y * b.raw() * &y * C64::new(p, 0.0);
        let lin = a.raw().adjoint() * &y + &y * a.raw() + &y * C64::new(pp / p - mu, 0.0);
        let dy = -quad - lin + c.raw() * C64::new(1.0 / p, 0.0);
        Ok(DVector::from_column_slice(dy.as_slice()))
    };

    let y0v = DVector::from_column_slice(y0.raw().as_slice());
    let f0 = rhs(spec.t0, &y0v)?;
    let to_mat = |v: &DVector<C64>| -> CMatrix {
        CMatrix::new(DMatrix::from_column_slice(n, n, v.as_slice()))
            .expect("accepted states are finite")
    };
    let mut series = MatrixRiccatiSeries {
        t0: spec.t0,
        times: vec![spec.t0],
        y: vec![y0.clone()],
        y_prime: vec![to_mat(&f0)],
        hermitian_drift: if track_drift { Some(vec![y0.hermiticity_defect()]) } else { None },
    };
    let cap = escape_cap(opts.escape_threshold);
    let mut max_norm = y0.norm();
    let outcome = rk::solve(&mut rhs, spec.t0, y0v, t_end, &opts.rk(), &mut |st: rk::Step<'_>| {
        let ym = to_mat(st.y1);
        let fm = to_mat(st.f1);
        if let Some(drift) = series.hermitian_drift.as_mut() {
            drift.push(ym.hermiticity_defect());
        }
        series.times.push(st.t1);
        series.y.push(ym);
        series.y_prime.push(fm);
        let norm = st.y1.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        max_norm = max_norm.max(norm);
        if norm > cap {
            Control::Stop
        } else {
            Control::Continue
        }
    });
    let report = escape_verdict(outcome, max_norm, opts)?;
    Ok((series, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{time_matrix_from_strs, ScalarExpr};

    fn const_spec(t0: f64, a: &[&[&str]], b: &[&[&str]], c: &[&[&str]], mu: &str, p: &str) -> SystemSpec {
        SystemSpec::new(
            t0,
            time_matrix_from_strs(a).unwrap(),
            time_matrix_from_strs(b).unwrap(),
            time_matrix_from_strs(c).unwrap(),
            ScalarExpr::parse(mu).unwrap(),
            ScalarExpr::parse(p).unwrap(),
        )
    }

    fn rotation_spec() -> SystemSpec {
        const_spec(
            0.0,
            &[&["0", "1"], &["-1", "0"]],
            &[&["1", "0"], &["0", "1"]],
            &[&["-1", "0"], &["0", "-1"]],
            "0",
            "1",
        )
    }

    fn harmonic_n1() -> SystemSpec {
        const_spec(0.0, &[&["0"]], &[&["1"]], &[&["-1"]], "0", "1")
    }

    /// Options tight enough to demonstrate closed-form agreement well below
    /// the documented bounds (the defaults land within an order of magnitude).
    fn tight_opts() -> IntegratorOpts {
        IntegratorOpts {
            rtol: 1e-11,
            atol: 1e-14,
            ..Default::default()
        }
    }

    #[test]
    fn harmonic_matrix_solution_matches_cosine() {
        let spec = harmonic_n1();
        let traj = integrate_system(
            &spec,
            &CMatrix::identity(1),
            &CMatrix::zeros(1),
            20.0,
            &tight_opts(),
        )
        .unwrap();
        let mut max_err: f64 = 0.0;
        for (k, &t) in traj.times.iter().enumerate() {
            let phi = traj.states[k].0.entry(0, 0);
            max_err = max_err.max((phi.re - t.cos()).abs());
            max_err = max_err.max(phi.im.abs());
        }
        // Dense output between nodes as well.
        for k in 0..200 {
            let t = 20.0 * (k as f64) / 199.0;
            let (phi, psi) = traj.eval_stored(t);
            max_err = max_err.max((phi.entry(0, 0).re - t.cos()).abs());
            max_err = max_err.max((psi.entry(0, 0).re + t.sin()).abs());
        }
        assert!(max_err <= 1e-8, "max error {max_err}");
    }

    #[test]
    fn rotation_conjoined_defect_stays_tiny() {
        let spec = rotation_spec();
        let traj = integrate_system(
            &spec,
            &CMatrix::identity(2),
            &CMatrix::zeros(2),
            20.0,
            &tight_opts(),
        )
        .unwrap();
        let max_defect = traj
            .conjoined_defect
            .iter()
            .cloned()
            .fold(0.0f64, f64::max);
        assert!(max_defect <= 1e-9, "defect {max_defect}");
        assert!(traj.is_real_system());
    }

    #[test]
    fn conjoined_defect_within_scale_bound_at_default_tolerances() {
        // At default tolerances the defect of conjoined data stays within
        // 1e−8 · (‖Φ0‖+‖Ψ0‖)² · exp(∫|mu|); here the weight is 1.
        let spec = rotation_spec();
        let traj = integrate_system(
            &spec,
            &CMatrix::identity(2),
            &CMatrix::zeros(2),
            20.0,
            &IntegratorOpts::default(),
        )
        .unwrap();
        let scale = (CMatrix::identity(2).norm() + 0.0).powi(2);
        let max_defect = traj
            .conjoined_defect
            .iter()
            .cloned()
            .fold(0.0f64, f64::max);
        assert!(
            max_defect <= 1e-8 * scale,
            "defect {max_defect} vs bound {}",
            1e-8 * scale
        );
    }

    #[test]
    fn nonconjoined_defect_tracks_mu_weight() {
        // defect(t) = defect(t0) · exp(∫mu) for any solution; mu constant here.
        let mu = 0.3;
        let spec = const_spec(
            0.0,
            &[&["0", "1"], &["-1", "0"]],
            &[&["1", "0"], &["0", "1"]],
            &[&["-1", "0"], &["0", "-1"]],
            "0.3",
            "1",
        );
        // Off-diagonal Ψ0 makes Φ0*Ψ0 − Ψ0*Φ0 ≠ 0.
        let psi0 = CMatrix::from_real_rows(2, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        let traj = integrate_system(
            &spec,
            &CMatrix::identity(2),
            &psi0,
            3.0,
            &IntegratorOpts::default(),
        )
        .unwrap();
        let d0 = traj.conjoined_defect[0];
        assert!(d0 > 1.0); // sqrt(2)
        for (k, &t) in traj.times.iter().enumerate() {
            let want = d0 * (mu * t).exp();
            let got = traj.conjoined_defect[k];
            assert!(
                (got - want).abs() <= 1e-6 * want,
                "t={t}: defect {got} vs {want}"
            );
        }
    }

    #[test]
    fn harmonic_zeros_detected_at_half_period() {
        let spec = harmonic_n1();
        let traj = integrate_system(
            &spec,
            &CMatrix::identity(1),
            &CMatrix::zeros(1),
            10.0,
            &IntegratorOpts::default(),
        )
        .unwrap();
        let zeros = detect_det_zeros(&traj, 1e-6);
        let expected = [
            std::f64::consts::FRAC_PI_2,
            3.0 * std::f64::consts::FRAC_PI_2,
            5.0 * std::f64::consts::FRAC_PI_2,
        ];
        assert_eq!(zeros.len(), 3, "zeros: {zeros:?}");
        for (z, want) in zeros.iter().zip(expected.iter()) {
            assert!(
                (z.t_zero - want).abs() <= 1e-5,
                "zero at {} vs {want}",
                z.t_zero
            );
        }
        // cos crosses zero transversally: the sign detector should claim these.
        assert!(zeros.iter().all(|z| z.kind == ZeroKind::SignChange));
    }

    #[test]
    fn rotation_touching_zeros_found_by_dip_scan() {
        // det Φ = cos²t never changes sign; only the dip detector can see the
        // touching zeros, and the monitor value at the bottom is ~1e-8.
        let spec = rotation_spec();
        let traj = integrate_system(
            &spec,
            &CMatrix::identity(2),
            &CMatrix::zeros(2),
            50.0,
            &IntegratorOpts::default(),
        )
        .unwrap();
        let scan = scan_det_zeros(&traj, 1e-6);
        assert!(scan.zeros.len() >= 3, "only {} zeros", scan.zeros.len());
        assert!(scan.zeros.iter().all(|z| z.kind == ZeroKind::Dip));
        for (k, z) in scan.zeros.iter().enumerate() {
            let want = std::f64::consts::FRAC_PI_2 + k as f64 * std::f64::consts::PI;
            assert!(
                (z.t_zero - want).abs() <= 1e-5,
                "zero {k} at {} vs {want}",
                z.t_zero
            );
            assert!(z.sigma_ratio_min <= 1e-6);
        }
        // All 16 half-period points π/2 + kπ ≤ 50 should be present.
        assert_eq!(scan.zeros.len(), 16);
    }

    #[test]
    fn constant_identity_has_no_zeros() {
        let spec = const_spec(0.0, &[&["0"]], &[&["0"]], &[&["0"]], "0", "1");
        let traj = integrate_system(
            &spec,
            &CMatrix::identity(1),
            &CMatrix::zeros(1),
            10.0,
            &IntegratorOpts::default(),
        )
        .unwrap();
        assert!(detect_det_zeros(&traj, 1e-6).is_empty());
        assert!(traj.sigma_min_ratio.iter().all(|&r| (r - 1.0).abs() < 1e-12));
    }

    fn plain_scalar(a11: &str, a12: &str, a21: &str, a22: &str) -> ScalarSystemSpec {
        ScalarSystemSpec {
            t0: 0.0,
            a11: ScalarExpr::parse(a11).unwrap(),
            a12: ScalarExpr::parse(a12).unwrap(),
            a21: ScalarExpr::parse(a21).unwrap(),
            a22: ScalarExpr::parse(a22).unwrap(),
        }
    }

    #[test]
    fn scalar_system_cosine_zeros() {
        let s = plain_scalar("0", "1", "-1", "0");
        let traj = integrate_scalar_system(&s, 1.0, 0.0, 10.0, &IntegratorOpts::default()).unwrap();
        assert_eq!(traj.zeros.len(), 3);
        for (k, z) in traj.zeros.iter().enumerate() {
            let want = std::f64::consts::FRAC_PI_2 + k as f64 * std::f64::consts::PI;
            assert!((z - want).abs() <= 1e-6, "zero {z} vs {want}");
        }
    }

    #[test]
    fn scalar_system_decoupled_exponential() {
        let s = plain_scalar("0.5", "0", "0", "0");
        let traj = integrate_scalar_system(&s, 2.0, 1.0, 4.0, &IntegratorOpts::default()).unwrap();
        assert!(traj.zeros.is_empty());
        for (k, &t) in traj.times.iter().enumerate() {
            let want = 2.0 * (0.5 * t).exp();
            assert!((traj.phi[k] - want).abs() <= 1e-8 * want);
        }
    }

    #[test]
    fn scalar_riccati_tangent_escape() {
        // y' + y² + 1 = 0 from y(0)=0: y = −tan(t), escapes at π/2.
        let s = plain_scalar("0", "1", "-1", "0");
        let (series, report) =
            integrate_scalar_riccati(&s, 0.0, 3.0, &IntegratorOpts::default()).unwrap();
        assert!(report.escaped);
        assert!(report.threshold_exceeded);
        let t_esc = report.t_escape.unwrap();
        assert!(
            (t_esc - std::f64::consts::FRAC_PI_2).abs() <= 1e-4,
            "escape at {t_esc}"
        );
        // Solution values match −tan before the blow-up region.
        for (k, &t) in series.times.iter().enumerate() {
            if t > 1.2 {
                break;
            }
            assert!((series.y[k] + t.tan()).abs() <= 1e-7, "y({t})");
        }
    }

    #[test]
    fn scalar_riccati_linear_decay_no_escape() {
        // y' + y = 0 (a12 = a21 = 0, E = 1): y = e^{−t}.
        let s = plain_scalar("1", "0", "0", "0");
        let (series, report) =
            integrate_scalar_riccati(&s, 1.0, 5.0, &IntegratorOpts::default()).unwrap();
        assert!(!report.escaped);
        assert!(!report.threshold_exceeded);
        assert!(report.t_escape.is_none());
        for (k, &t) in series.times.iter().enumerate() {
            assert!((series.y[k] - (-t).exp()).abs() <= 1e-9);
        }
    }

    /// Fixed-step classical RK4 oracle for scalar y' = f(t, y).
    fn rk4_oracle(f: impl Fn(f64, f64) -> f64, t0: f64, y0: f64, t_end: f64, steps: usize) -> f64 {
        let h = (t_end - t0) / steps as f64;
        let mut t = t0;
        let mut y = y0;
        for _ in 0..steps {
            let k1 = f(t, y);
            let k2 = f(t + 0.5 * h, y + 0.5 * h * k1);
            let k3 = f(t + 0.5 * h, y + 0.5 * h * k2);
            let k4 = f(t + h, y + h * k3);
            y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            t += h;
        }
        y
    }

    #[test]
    fn scalar_riccati_hyperbolic_decay_vs_fixed_step_oracle() {
        // y' + y² = 0: from y(0)=+1 the solution decays as 1/(1+t).
        let s = plain_scalar("0", "1", "0", "0");
        let (series, report) =
            integrate_scalar_riccati(&s, 1.0, 5.0, &IntegratorOpts::default()).unwrap();
        assert!(!report.escaped);
        let y_end = *series.y.last().unwrap();
        assert!((y_end - 1.0 / 6.0).abs() <= 1e-9);
        let oracle = rk4_oracle(|_t, y| -y * y, 0.0, 1.0, 5.0, 50_000);
        assert!((y_end - oracle).abs() <= 1e-8);

        // ...while y(0) = −1 blows up at t = 1 (y = −1/(1−t)).
        let (_, report) =
            integrate_scalar_riccati(&s, -1.0, 5.0, &IntegratorOpts::default()).unwrap();
        assert!(report.escaped);
        assert!((report.t_escape.unwrap() - 1.0).abs() <= 1e-4);
    }

    /// Cubic Hermite interpolation over a sampled scalar series with derivatives.
    fn hermite_series(ts: &[f64], ys: &[f64], dys: &[f64], t: f64) -> f64 {
        let idx = match ts.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(i) => return ys[i],
            Err(i) => i.clamp(1, ts.len() - 1),
        };
        let (t0, t1) = (ts[idx - 1], ts[idx]);
        let h = t1 - t0;
        let th = ((t - t0) / h).clamp(0.0, 1.0);
        let (th2, th3) = (th * th, th * th * th);
        ys[idx - 1] * (2.0 * th3 - 3.0 * th2 + 1.0)
            + dys[idx - 1] * h * (th3 - 2.0 * th2 + th)
            + ys[idx] * (-2.0 * th3 + 3.0 * th2)
            + dys[idx] * h * (th3 - th2)
    }

    #[test]
    fn matrix_riccati_n1_reduces_to_scalar() {
        // n = 1 with p constant: a12 = p·b, E = 2a − mu, a21 = c/p. The data
        // keep y' = −a12·y² − E·y + a21 near its stable equilibrium (a21 > 0
        // puts a root above y0, so no finite-time escape on the window).
        let spec = const_spec(0.0, &[&["0.3"]], &[&["1 + 0.5*sin(t)"]], &[&["0.8"]], "0.1", "2");
        let y0 = CMatrix::from_real_rows(1, &[0.2]).unwrap();
        let (series, report) =
            integrate_matrix_riccati(&spec, &y0, 3.0, &IntegratorOpts::default()).unwrap();
        assert!(!report.escaped);

        let scalar = ScalarSystemSpec {
            t0: 0.0,
            a11: ScalarExpr::parse("0.6 - 0.1").unwrap(), // E = 2a − mu, split as a11 − a22 with a22 = 0
            a12: ScalarExpr::parse("2*(1 + 0.5*sin(t))").unwrap(),
            a21: ScalarExpr::parse("0.8/2").unwrap(),
            a22: ScalarExpr::parse("0").unwrap(),
        };
        let (ss, _) = integrate_scalar_riccati(&scalar, 0.2, 3.0, &IntegratorOpts::default()).unwrap();
        for (k, &t) in series.times.iter().enumerate() {
            let y_mat = series.y[k].entry(0, 0).re;
            let y_sc = hermite_series(&ss.times, &ss.y, &ss.y_prime, t);
            assert!(
                (y_mat - y_sc).abs() <= 1e-6,
                "t={t}: matrix {y_mat} vs scalar {y_sc}"
            );
        }
    }

    #[test]
    fn rotation_matrix_riccati_escapes_near_first_zero() {
        let spec = rotation_spec();
        let (series, report) =
            integrate_matrix_riccati(&spec, &CMatrix::zeros(2), 3.0, &IntegratorOpts::default())
                .unwrap();
        assert!(report.escaped, "expected finite-time escape");
        let t_esc = report.t_escape.unwrap();
        assert!(
            (t_esc - std::f64::consts::FRAC_PI_2).abs() <= 1e-3,
            "escape at {t_esc}"
        );
        // Hermitian initial data: drift must stay at rounding level relative
        // to the solution magnitude until the blow-up.
        let drift = series.hermitian_drift.as_ref().unwrap();
        for (k, d) in drift.iter().enumerate() {
            let scale = series.y[k].norm().max(1.0);
            assert!(d / scale <= 1e-8, "drift {d} at {}", series.times[k]);
        }
    }

    #[test]
    fn equilibrium_matrix_riccati_stays_zero() {
        let spec = const_spec(
            0.0,
            &[&["0", "0"], &["0", "0"]],
            &[&["1", "0"], &["0", "1"]],
            &[&["0", "0"], &["0", "0"]],
            "0",
            "1",
        );
        let (series, report) =
            integrate_matrix_riccati(&spec, &CMatrix::zeros(2), 10.0, &IntegratorOpts::default())
                .unwrap();
        assert!(!report.escaped);
        assert!(!report.threshold_exceeded);
        for y in &series.y {
            assert!(y.norm() <= 1e-12);
        }
    }

    #[test]
    fn linearity_of_matrix_system() {
        let spec = const_spec(
            0.0,
            &[&["0.1", "0.2"], &["-0.3", "0"]],
            &[&["1", "0.1"], &["0.1", "0.8"]],
            &[&["-1", "0.2"], &["0.2", "-0.5"]],
            "0.05",
            "1",
        );
        let opts = tight_opts();
        let phi_a = CMatrix::identity(2);
        let psi_a = CMatrix::zeros(2);
        let phi_b = CMatrix::from_real_rows(2, &[0.0, 0.5, -0.5, 0.0]).unwrap();
        let psi_b = CMatrix::from_real_rows(2, &[1.0, 0.0, 0.0, 1.0]).unwrap();
        let ta = integrate_system(&spec, &phi_a, &psi_a, 4.0, &opts).unwrap();
        let tb = integrate_system(&spec, &phi_b, &psi_b, 4.0, &opts).unwrap();
        let tsum = integrate_system(&spec, &phi_a.add(&phi_b), &psi_a.add(&psi_b), 4.0, &opts)
            .unwrap();
        assert!(ta.rescale_log.is_empty() && tb.rescale_log.is_empty() && tsum.rescale_log.is_empty());
        for k in 0..40 {
            let t = 4.0 * (k as f64) / 39.0;
            let (pa, sa) = ta.eval_stored(t);
            let (pb, sb) = tb.eval_stored(t);
            let (ps, ss) = tsum.eval_stored(t);
            let scale = ps.norm().max(ss.norm()).max(1.0);
            assert!(pa.add(&pb).sub(&ps).norm() <= 1e-8 * scale);
            assert!(sa.add(&sb).sub(&ss).norm() <= 1e-8 * scale);
        }
    }

    #[test]
    fn rescale_transparency_between_thresholds() {
        // With mu = 1 every mode of this system grows like exp(t/2), so the
        // norm crosses 1e6 around t ≈ 28 and 1e8 around t ≈ 37, and again
        // after each renormalization; both thresholds fire on [0, 90].
        let spec = const_spec(
            0.0,
            &[&["0.3", "1"], &["-1", "0.3"]],
            &[&["1", "0"], &["0", "1"]],
            &[&["-1", "0"], &["0", "-1"]],
            "1",
            "1",
        );
        let run = |threshold: f64| {
            let opts = IntegratorOpts { rescale_threshold: threshold, ..tight_opts() };
            integrate_system(&spec, &CMatrix::identity(2), &CMatrix::zeros(2), 90.0, &opts).unwrap()
        };
        let a = run(1e8);
        let b = run(1e6);
        assert!(!a.rescale_log.is_empty(), "no rescale events at 1e8");
        assert!(
            b.rescale_log.len() > a.rescale_log.len(),
            "expected more events at the lower threshold: {} vs {}",
            b.rescale_log.len(),
            a.rescale_log.len()
        );
        // The singularity monitor is invariant under joint rescaling.
        for k in 0..=180 {
            let t = 0.5 * k as f64;
            let (ra, rb) = (a.ratio_at(t), b.ratio_at(t));
            assert!((ra - rb).abs() <= 1e-9, "t={t}: {ra} vs {rb}");
        }
        // Scale bookkeeping recovers the same original-scale log|det Φ| no
        // matter how many renormalizations happened along the way.
        let lda = a.det_logabs_original(a.times.len() - 1);
        let ldb = b.det_logabs_original(b.times.len() - 1);
        assert!(lda > 20.0, "determinant should have grown, log {lda}");
        assert!((lda - ldb).abs() <= 1e-6, "log det {lda} vs {ldb}");
    }

    #[test]
    fn zero_locations_stable_under_tolerance_halving() {
        let spec = harmonic_n1();
        let run = |rtol: f64| {
            let opts = IntegratorOpts { rtol, atol: rtol * 1e-3, ..Default::default() };
            let traj = integrate_system(
                &spec,
                &CMatrix::identity(1),
                &CMatrix::zeros(1),
                10.0,
                &opts,
            )
            .unwrap();
            detect_det_zeros(&traj, 1e-6)
        };
        let base = run(1e-9);
        let halved = run(5e-10);
        assert_eq!(base.len(), halved.len());
        for (z1, z2) in base.iter().zip(halved.iter()) {
            assert!((z1.t_zero - z2.t_zero).abs() <= 1e-5);
        }
    }

    #[test]
    fn coefficient_pole_surfaces_as_error() {
        let spec = const_spec(0.0, &[&["0"]], &[&["1/(1 - t)"]], &[&["-1"]], "0", "1");
        let err = integrate_system(
            &spec,
            &CMatrix::identity(1),
            &CMatrix::zeros(1),
            2.0,
            &IntegratorOpts::default(),
        )
        .unwrap_err();
        match err {
            IntegrateError::Coeff(_) => {}
            IntegrateError::StepSizeUnderflow { t } => assert!((t - 1.0).abs() < 0.02),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn bad_inputs_rejected() {
        let spec = harmonic_n1();
        assert!(matches!(
            integrate_system(
                &spec,
                &CMatrix::identity(2),
                &CMatrix::zeros(2),
                1.0,
                &IntegratorOpts::default()
            ),
            Err(IntegrateError::BadInput(_))
        ));
        assert!(matches!(
            integrate_system(
                &spec,
                &CMatrix::identity(1),
                &CMatrix::zeros(1),
                -1.0,
                &IntegratorOpts::default()
            ),
            Err(IntegrateError::BadInput(_))
        ));
    }

}
