//! The quadratic (Riccati) side of the matrix system: coefficient transforms
//! for the scale-weighted substitution `Ψ = p·YΦ`, reconstruction of linear
//! solutions from Riccati trajectories, residuals for the scalar integral form
//! `y(t) + ∫ a·y² dτ + e(t) = 0`, and an ordering check between two such
//! equations with nested forcing terms.

use nalgebra::{DMatrix, DVector};

use crate::coeffs::{CoeffError, ScalarExpr, SystemSpec};
use crate::integrate::{
    pack, rescaled_defect, rk, sigma_ratio, IntegrateError, IntegratorOpts, MatrixRiccatiSeries,
    Seg, Trajectory,
};
use crate::matlin::{CMatrix, C64};
use crate::quad;

/// Failure modes of the operations in this module.
#[derive(Debug, Clone, thiserror::Error)]
pub enum RiccatiError {
    #[error("coefficient evaluation failed: {0}")]
    Coeff(#[from] CoeffError),
    #[error("scale function p(t) = {value} is not positive at t = {t}")]
    NonPositiveP { t: f64, value: f64 },
    #[error("integration failed: {0}")]
    Integrate(#[from] IntegrateError),
    #[error(
        "solution series too coarse near t = {t}: estimated interpolation error {estimate:.3e} \
         exceeds the accuracy target"
    )]
    InterpolationGap { t: f64, estimate: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("precondition violated at t = {t}: {what}")]
    PreconditionViolated { what: String, t: f64 },
    #[error("invalid input: {0}")]
    BadInput(String),
}

fn map_rk(e: rk::RkError<RiccatiError>) -> RiccatiError {
    match e {
        rk::RkError::StepSizeUnderflow { t } => {
            RiccatiError::Integrate(IntegrateError::StepSizeUnderflow { t })
        }
        rk::RkError::MaxSteps { t } => RiccatiError::Integrate(IntegrateError::MaxSteps { t }),
        rk::RkError::Rhs { source, .. } => source,
    }
}

// ---------------------------------------------------------------------------
// Coefficient transform
// ---------------------------------------------------------------------------

/// Coefficients of the weighted Riccati equation
/// `Y' = −Y B₁ Y − A₁*Y − Y A₁ + C₁` at one time.
#[derive(Debug, Clone)]
pub struct TransformedCoeffs {
    /// `A + ½(p'/p + μ)I`.
    pub a1: CMatrix,
    /// `p·B` (Hermitian).
    pub b1: CMatrix,
    /// `(1/p)·C` (Hermitian).
    pub c1: CMatrix,
}

/// Evaluate the transformed coefficient triple at time `t`.
///
/// The derivative `p'` uses the same centered finite-difference rule as the
/// integrators, so the transform agrees with the flow they realize.
pub fn transformed_coeffs(spec: &SystemSpec, t: f64) -> Result<TransformedCoeffs, RiccatiError> {
    let p = spec.eval_p(t)?;
    if p <= 0.0 {
        return Err(RiccatiError::NonPositiveP { t, value: p });
    }
    let pp = spec.eval_p_prime(t)?;
    let mu = spec.eval_mu(t)?;
    let shift = 0.5 * (pp / p + mu);
    let a = spec.eval_a(t)?;
    let b = spec.eval_b(t)?;
    let c = spec.eval_c(t)?;
    Ok(TransformedCoeffs {
        a1: a.add(&CMatrix::identity(spec.n).scale(shift)),
        b1: b.scale(p),
        c1: c.scale(1.0 / p),
    })
}

// ---------------------------------------------------------------------------
// Reconstruction of the linear solution from a Riccati trajectory
// ---------------------------------------------------------------------------

fn mat_to_vec(m: &CMatrix) -> DVector<C64> {
    DVector::from_column_slice(m.raw().as_slice())
}

fn vec_to_mat(v: &DVector<C64>, n: usize) -> DMatrix<C64> {
    DMatrix::from_column_slice(n, n, v.as_slice())
}

/// Piecewise-cubic view of a matrix series with nodal values and derivatives.
struct SeriesInterp {
    times: Vec<f64>,
    vals: Vec<DVector<C64>>,
    ders: Vec<DVector<C64>>,
    n: usize,
}

impl SeriesInterp {
    fn new(series: &MatrixRiccatiSeries) -> Result<SeriesInterp, RiccatiError> {
        let m = series.times.len();
        if m < 2 {
            return Err(RiccatiError::BadInput(
                "solution series needs at least two nodes".into(),
            ));
        }
        if series.y.len() != m || series.y_prime.len() != m {
            return Err(RiccatiError::BadInput(
                "solution series values, derivatives and times must have equal length".into(),
            ));
        }
        if !series.times.windows(2).all(|w| w[1] > w[0]) {
            return Err(RiccatiError::BadInput(
                "solution series grid must be strictly increasing".into(),
            ));
        }
        let n = series.y[0].dim();
        Ok(SeriesInterp {
            times: series.times.clone(),
            vals: series.y.iter().map(mat_to_vec).collect(),
            ders: series.y_prime.iter().map(mat_to_vec).collect(),
            n,
        })
    }

    fn interval(&self, t: f64) -> usize {
        match self
            .times
            .binary_search_by(|x| x.partial_cmp(&t).unwrap())
        {
            Ok(i) => i.min(self.times.len() - 2),
            Err(i) => i.clamp(1, self.times.len() - 1) - 1,
        }
    }

    fn value(&self, t: f64) -> DMatrix<C64> {
        let k = self.interval(t);
        let v = rk::hermite_eval(
            self.times[k],
            self.times[k + 1],
            &self.vals[k],
            &self.ders[k],
            &self.vals[k + 1],
            &self.ders[k + 1],
            t,
        );
        vec_to_mat(&v, self.n)
    }

    /// Per-interval coarseness guard. Third divided differences of the nodal
    /// derivatives estimate the fourth derivative of the series, which turns
    /// into the classical cubic-Hermite error bound h⁴‖Y⁗‖/384 per interval.
    /// Grids produced by the adaptive integrator at tolerance τ keep this
    /// about two orders of magnitude below the acceptance line; thinning such
    /// a grid four-fold or more trips the check.
    fn check_resolution(&self, opts: &IntegratorOpts) -> Result<(), RiccatiError> {
        let m = self.times.len();
        if m < 4 {
            return Ok(());
        }
        let dd1: Vec<DVector<C64>> = (0..m - 1)
            .map(|k| {
                (&self.ders[k + 1] - &self.ders[k])
                    * C64::new(1.0 / (self.times[k + 1] - self.times[k]), 0.0)
            })
            .collect();
        let dd2: Vec<DVector<C64>> = (0..m - 2)
            .map(|k| {
                (&dd1[k + 1] - &dd1[k])
                    * C64::new(1.0 / (self.times[k + 2] - self.times[k]), 0.0)
            })
            .collect();
        let dd3: Vec<DVector<C64>> = (0..m - 3)
            .map(|k| {
                (&dd2[k + 1] - &dd2[k])
                    * C64::new(1.0 / (self.times[k + 3] - self.times[k]), 0.0)
            })
            .collect();
        for k in 0..m - 1 {
            let j = k.saturating_sub(1).min(m - 4);
            let quartic = 6.0 * dd3[j].norm();
            let h = self.times[k + 1] - self.times[k];
            let scale = self.vals[k]
                .norm()
                .max(self.vals[k + 1].norm())
                .max(1.0);
            let estimate = h.powi(4) / 384.0 * quartic;
            if estimate > 1e5 * (opts.atol + opts.rtol * scale) {
                let tm = 0.5 * (self.times[k] + self.times[k + 1]);
                return Err(RiccatiError::InterpolationGap { t: tm, estimate });
            }
        }
        Ok(())
    }
}

/// Rebuild a solution pair of the linear system from a Riccati trajectory.
///
/// Integrates `Φ' = [A + p·B·Y(t)]Φ` from `Phi_t1` over the series' time
/// window, interpolating `Y` cubically, and sets `Ψ = p·YΦ`. The result
/// carries the same monitors as a directly integrated trajectory and satisfies
/// the linear system to within a small multiple of the integration tolerance
/// whenever the series itself solves the Riccati equation that accurately.
pub fn reconstruct_solution(
    spec: &SystemSpec,
    yseries: &MatrixRiccatiSeries,
    phi_t1: &CMatrix,
    opts: &IntegratorOpts,
) -> Result<Trajectory, RiccatiError> {
    let n = spec.n;
    if yseries.y.first().map(|y| y.dim()) != Some(n) || phi_t1.dim() != n {
        return Err(RiccatiError::BadInput(format!(
            "series and initial matrix must match the system dimension {n}"
        )));
    }
    let interp = SeriesInterp::new(yseries)?;
    let sv = phi_t1.singular_values();
    let (smin, smax) = (
        sv.iter().cloned().fold(f64::INFINITY, f64::min),
        sv.iter().cloned().fold(0.0f64, f64::max),
    );
    if !(smin > 1e-12 * smax.max(1.0)) {
        return Err(RiccatiError::BadInput(
            "initial matrix must be invertible".into(),
        ));
    }
    interp.check_resolution(opts)?;

    let t_start = yseries.times[0];
    let t_end = *yseries.times.last().unwrap();

    let mut rhs = |t: f64, v: &DVector<C64>| -> Result<DVector<C64>, RiccatiError> {
        let a = spec.eval_a(t)?;
        let b = spec.eval_b(t)?;
        let p = spec.eval_p(t)?;
        if p <= 0.0 {
            return Err(RiccatiError::NonPositiveP { t, value: p });
        }
        let y = interp.value(t);
        let phi = vec_to_mat(v, n);
        let coeff = a.raw() + b.raw() * &y * C64::new(p, 0.0);
        let dphi = coeff * phi;
        Ok(DVector::from_column_slice(dphi.as_slice()))
    };

    // Collect the Φ run first; monitors and the Ψ half are derived afterwards,
    // where errors can still be propagated.
    struct PhiSeg {
        t0: f64,
        t1: f64,
        y0: DVector<C64>,
        f0: DVector<C64>,
        y1: DVector<C64>,
        f1: DVector<C64>,
    }
    let mut phi_segs: Vec<PhiSeg> = Vec::new();
    rk::solve(
        &mut rhs,
        t_start,
        mat_to_vec(phi_t1),
        t_end,
        &opts.rk(),
        &mut |s: rk::Step<'_>| {
            phi_segs.push(PhiSeg {
                t0: s.t0,
                t1: s.t1,
                y0: s.y0.clone(),
                f0: s.f0.clone(),
                y1: s.y1.clone(),
                f1: s.f1.clone(),
            });
            rk::Control::Continue
        },
    )
    .map_err(map_rk)?;

    // Ψ = p·YΦ with Ψ' by the product rule. Y' is taken from the Riccati
    // right-hand side at the interpolated Y rather than from the cubic's
    // derivative: with that choice the pair satisfies the second equation of
    // the linear system identically (the substitution cancels algebraically
    // for any Y value), so interpolation error cannot leak into the residual.
    let psi_pair = |t: f64,
                    phi_v: &DVector<C64>,
                    fphi_v: &DVector<C64>|
     -> Result<(DMatrix<C64>, DMatrix<C64>), RiccatiError> {
        let p = spec.eval_p(t)?;
        if p <= 0.0 {
            return Err(RiccatiError::NonPositiveP { t, value: p });
        }
        let pp = spec.eval_p_prime(t)?;
        let mu = spec.eval_mu(t)?;
        let a = spec.eval_a(t)?.raw().clone();
        let b = spec.eval_b(t)?.raw().clone();
        let c = spec.eval_c(t)?.raw().clone();
        let y = interp.value(t);
        let yd = -(&y * &b * &y) * C64::new(p, 0.0)
            - a.adjoint() * &y
            - &y * &a
            - &y * C64::new(pp / p - mu, 0.0)
            + &c * C64::new(1.0 / p, 0.0);
        let phi = vec_to_mat(phi_v, n);
        let fphi = vec_to_mat(fphi_v, n);
        let psi = &y * &phi * C64::new(p, 0.0);
        let dpsi = &y * &phi * C64::new(pp, 0.0)
            + &yd * &phi * C64::new(p, 0.0)
            + &y * &fphi * C64::new(p, 0.0);
        Ok((psi, dpsi))
    };

    let real_series = yseries.y.iter().chain(std::iter::once(phi_t1)).all(|m| {
        m.raw()
            .iter()
            .all(|z| z.im.abs() <= 1e-12 * (1.0 + z.re.abs()))
    });
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
        real_system: spec.probably_real() && real_series,
        segs: Vec::new(),
    };

    let push_node = |traj: &mut Trajectory, t: f64, phi: &DMatrix<C64>, psi: &DMatrix<C64>| {
        let phi_m = CMatrix::new(phi.clone()).expect("reconstructed states are finite");
        let psi_m = CMatrix::new(psi.clone()).expect("reconstructed states are finite");
        let ratio = sigma_ratio(phi, psi);
        let defect = phi_m
            .adjoint()
            .mul(&psi_m)
            .sub(&psi_m.adjoint().mul(&phi_m))
            .norm();
        let (logabs, phase) = phi_m.log_det();
        traj.times.push(t);
        traj.states.push((phi_m, psi_m));
        traj.sigma_min_ratio.push(ratio);
        traj.conjoined_defect.push(rescaled_defect(defect, 0.0));
        traj.node_ln_scale.push(0.0);
        traj.det_logabs.push(logabs);
        traj.det_phase.push(if logabs == f64::NEG_INFINITY {
            C64::new(0.0, 0.0)
        } else {
            phase
        });
    };

    let f0_v = rhs(t_start, &mat_to_vec(phi_t1))?;
    let (psi0, _) = psi_pair(t_start, &mat_to_vec(phi_t1), &f0_v)?;
    push_node(&mut traj, t_start, phi_t1.raw(), &psi0);

    for s in &phi_segs {
        let (psi0, dpsi0) = psi_pair(s.t0, &s.y0, &s.f0)?;
        let (psi1, dpsi1) = psi_pair(s.t1, &s.y1, &s.f1)?;
        let phi1 = vec_to_mat(&s.y1, n);
        push_node(&mut traj, s.t1, &phi1, &psi1);
        traj.segs.push(Seg {
            t0: s.t0,
            t1: s.t1,
            y0: pack(&vec_to_mat(&s.y0, n), &psi0),
            f0: pack(&vec_to_mat(&s.f0, n), &dpsi0),
            y1: pack(&phi1, &psi1),
            f1: pack(&vec_to_mat(&s.f1, n), &dpsi1),
            ln_scale: 0.0,
        });
    }
    Ok(traj)
}

// ---------------------------------------------------------------------------
// Scalar integral form
// ---------------------------------------------------------------------------

/// A real function sampled on a strictly increasing grid.
#[derive(Debug, Clone)]
pub struct SampledSeries {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl SampledSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<SampledSeries, RiccatiError> {
        if times.len() != values.len() {
            return Err(RiccatiError::BadInput(
                "sampled series times and values must have equal length".into(),
            ));
        }
        if times.len() < 2 {
            return Err(RiccatiError::BadInput(
                "sampled series needs at least two nodes".into(),
            ));
        }
        if !times.windows(2).all(|w| w[1] > w[0]) {
            return Err(RiccatiError::BadInput(
                "sampled series grid must be strictly increasing".into(),
            ));
        }
        if !times.iter().chain(values.iter()).all(|v| v.is_finite()) {
            return Err(RiccatiError::BadInput(
                "sampled series must be finite".into(),
            ));
        }
        Ok(SampledSeries { times, values })
    }

    /// Sample a closure on a grid.
    pub fn from_fn(times: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<SampledSeries, RiccatiError> {
        let values = times.iter().map(|&t| f(t)).collect();
        SampledSeries::new(times, values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Linear interpolation, clamped at the ends.
    pub fn value_at(&self, t: f64) -> f64 {
        quad::interp_linear(&self.times, &self.values, t)
    }

    /// Nodal derivatives through local quadratics (one-sided at the ends).
    fn node_derivatives(&self) -> Vec<f64> {
        let m = self.times.len();
        let deriv_at = |i0: usize, at: f64| -> f64 {
            let (x0, x1, x2) = (self.times[i0], self.times[i0 + 1], self.times[i0 + 2]);
            let (y0, y1, y2) = (self.values[i0], self.values[i0 + 1], self.values[i0 + 2]);
            y0 * (2.0 * at - x1 - x2) / ((x0 - x1) * (x0 - x2))
                + y1 * (2.0 * at - x0 - x2) / ((x1 - x0) * (x1 - x2))
                + y2 * (2.0 * at - x0 - x1) / ((x2 - x0) * (x2 - x1))
        };
        if m == 2 {
            let s = (self.values[1] - self.values[0]) / (self.times[1] - self.times[0]);
            return vec![s, s];
        }
        (0..m)
            .map(|k| {
                let i0 = k.clamp(1, m - 2) - 1;
                deriv_at(i0, self.times[k])
            })
            .collect()
    }
}

/// One scalar integral equation `y(t) + ∫_{t0}^t a(τ)y²(τ)dτ + e(t) = 0`.
#[derive(Debug, Clone)]
pub struct IntegralRiccatiInstance {
    /// Weight of the quadratic term.
    pub a: ScalarExpr,
    /// Forcing term, sampled on the working grid.
    pub e: SampledSeries,
    /// Lower limit of the integral (must be the first grid node).
    pub t0: f64,
}

fn grids_match(a: &[f64], b: &[f64], what: &str) -> Result<(), RiccatiError> {
    if a.len() != b.len() {
        return Err(RiccatiError::GridMismatch(format!(
            "{what}: lengths {} vs {}",
            a.len(),
            b.len()
        )));
    }
    for (k, (&x, &y)) in a.iter().zip(b.iter()).enumerate() {
        if (x - y).abs() > 1e-12 * x.abs().max(1.0) {
            return Err(RiccatiError::GridMismatch(format!(
                "{what}: node {k} differs ({x} vs {y})"
            )));
        }
    }
    Ok(())
}

/// Residual series `r(t_k) = y(t_k) + ∫_{t0}^{t_k} a·y² dτ + e(t_k)` with the
/// running integral by composite quadratic quadrature on the shared grid.
pub fn integral_riccati_residual(
    inst: &IntegralRiccatiInstance,
    y: &SampledSeries,
) -> Result<Vec<f64>, RiccatiError> {
    grids_match(inst.e.times(), y.times(), "forcing vs solution grid")?;
    if (inst.t0 - inst.e.times()[0]).abs() > 1e-12 * inst.t0.abs().max(1.0) {
        return Err(RiccatiError::GridMismatch(format!(
            "integral lower limit {} is not the first grid node {}",
            inst.t0,
            inst.e.times()[0]
        )));
    }
    let mut integrand = Vec::with_capacity(y.times().len());
    for (&t, &v) in y.times().iter().zip(y.values().iter()) {
        let a = inst.a.eval(t).map_err(|source| CoeffError::Scalar {
            name: "a",
            source,
        })?;
        integrand.push(a * v * v);
    }
    let cum = quad::cumulative_integral(y.times(), &integrand);
    Ok(y.values()
        .iter()
        .zip(cum.iter())
        .zip(inst.e.values().iter())
        .map(|((&yv, &iv), &ev)| yv + iv + ev)
        .collect())
}

// ---------------------------------------------------------------------------
// Ordering check between two integral equations
// ---------------------------------------------------------------------------

/// Result of comparing the solutions of two nested integral equations.
#[derive(Debug, Clone)]
pub struct ComparisonReport {
    /// `y₁ > y₀ − tol` held at every grid node.
    pub holds: bool,
    /// Minimum of `y₁ − y₀` over the grid.
    pub min_gap: f64,
    /// Node where the minimum gap occurs.
    pub t_min_gap: f64,
    /// The computed solution of the smaller-forcing equation on the grid.
    pub y1: Vec<f64>,
}

/// Given `y₀` solving the equation with forcing `e` and a second equation with
/// forcing `e₁` where `e > e₁ > 0` and `a ≥ 0`, solve the second equation
/// (through its differentiated form `y' + a·y² + e₁' = 0`, `y(t₀) = −e₁(t₀)`)
/// and report whether `y₁ > y₀` holds pointwise up to a rounding allowance of
/// `1e−8·(1 + max|y₀|)`.
pub fn comparison_check(
    inst_a: &IntegralRiccatiInstance,
    inst_b: &IntegralRiccatiInstance,
    y0: &SampledSeries,
    opts: &IntegratorOpts,
) -> Result<ComparisonReport, RiccatiError> {
    grids_match(inst_a.e.times(), inst_b.e.times(), "forcing grids")?;
    grids_match(inst_a.e.times(), y0.times(), "forcing vs solution grid")?;
    if (inst_a.t0 - inst_b.t0).abs() > 1e-12 * inst_a.t0.abs().max(1.0) {
        return Err(RiccatiError::GridMismatch(format!(
            "integral lower limits differ: {} vs {}",
            inst_a.t0, inst_b.t0
        )));
    }

    // Pointwise preconditions, reported at the first offending node.
    for (k, &t) in inst_a.e.times().iter().enumerate() {
        let (ea, eb) = (inst_a.e.values()[k], inst_b.e.values()[k]);
        if !(eb > 0.0) {
            return Err(RiccatiError::PreconditionViolated {
                what: format!("the smaller forcing must be positive, got {eb}"),
                t,
            });
        }
        if !(ea > eb) {
            return Err(RiccatiError::PreconditionViolated {
                what: format!("the forcing terms must be strictly nested, got {ea} vs {eb}"),
                t,
            });
        }
        let aa = inst_a.a.eval(t).map_err(|source| CoeffError::Scalar {
            name: "a",
            source,
        })?;
        let ab = inst_b.a.eval(t).map_err(|source| CoeffError::Scalar {
            name: "a",
            source,
        })?;
        if aa < 0.0 || ab < 0.0 {
            return Err(RiccatiError::PreconditionViolated {
                what: format!("the quadratic weight must be nonnegative, got {}", aa.min(ab)),
                t,
            });
        }
        if (aa - ab).abs() > 1e-10 * aa.abs().max(1.0) {
            return Err(RiccatiError::PreconditionViolated {
                what: format!("the two equations must share the quadratic weight ({aa} vs {ab})"),
                t,
            });
        }
    }

    // y₀ must actually solve its equation.
    let residual = integral_riccati_residual(inst_a, y0)?;
    let scale = y0
        .values()
        .iter()
        .chain(inst_a.e.values().iter())
        .fold(1.0f64, |acc, &v| acc.max(v.abs()));
    let (kmax, rmax) = residual
        .iter()
        .enumerate()
        .map(|(k, r)| (k, r.abs()))
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap();
    if rmax > 1e-6 * scale {
        return Err(RiccatiError::PreconditionViolated {
            what: format!(
                "the reference series does not solve its integral equation (residual {rmax:.3e})"
            ),
            t: y0.times()[kmax],
        });
    }

    // Solve the second equation in differentiated form.
    let d1 = inst_b.e.node_derivatives();
    let times = inst_b.e.times().to_vec();
    let e1_prime = move |t: f64| quad::interp_linear(&times, &d1, t);
    let a_expr = inst_b.a.clone();
    let mut rhs = move |t: f64, y: &DVector<C64>| -> Result<DVector<C64>, RiccatiError> {
        let a = a_expr.eval(t).map_err(|source| CoeffError::Scalar {
            name: "a",
            source,
        })?;
        let v = y[0];
        Ok(DVector::from_vec(vec![
            -v * v * C64::new(a, 0.0) - C64::new(e1_prime(t), 0.0),
        ]))
    };
    let t_start = inst_b.e.times()[0];
    let t_end = *inst_b.e.times().last().unwrap();
    let y1_start = -inst_b.e.values()[0];
    let mut segs: Vec<(f64, f64, DVector<C64>, DVector<C64>, DVector<C64>, DVector<C64>)> =
        Vec::new();
    rk::solve(
        &mut rhs,
        t_start,
        DVector::from_vec(vec![C64::new(y1_start, 0.0)]),
        t_end,
        &opts.rk(),
        &mut |s: rk::Step<'_>| {
            segs.push((
                s.t0,
                s.t1,
                s.y0.clone(),
                s.f0.clone(),
                s.y1.clone(),
                s.f1.clone(),
            ));
            rk::Control::Continue
        },
    )
    .map_err(map_rk)?;
    let eval_y1 = |t: f64| -> f64 {
        if t <= t_start || segs.is_empty() {
            return y1_start;
        }
        let idx = segs
            .binary_search_by(|s| s.1.partial_cmp(&t).unwrap())
            .unwrap_or_else(|i| i.min(segs.len() - 1));
        let s = &segs[idx];
        rk::hermite_eval(s.0, s.1, &s.2, &s.3, &s.4, &s.5, t)[0].re
    };

    let y0_scale = y0.values().iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
    let tol = 1e-8 * (1.0 + y0_scale);
    let mut min_gap = f64::INFINITY;
    let mut t_min_gap = t_start;
    let mut y1 = Vec::with_capacity(y0.times().len());
    for (k, &t) in y0.times().iter().enumerate() {
        let v1 = eval_y1(t);
        y1.push(v1);
        let gap = v1 - y0.values()[k];
        if gap < min_gap {
            min_gap = gap;
            t_min_gap = t;
        }
    }
    Ok(ComparisonReport {
        holds: min_gap > -tol,
        min_gap,
        t_min_gap,
        y1,
    })
}
