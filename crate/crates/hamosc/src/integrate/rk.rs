//! Adaptive embedded Runge–Kutta 5(4) driver over complex state vectors.
//!
//! Dormand–Prince coefficients with the first-same-as-last property, a PI
//! step-size controller, and automatic initial-step selection. The driver is
//! generic over the right-hand side's error type and reports each accepted
//! step (with endpoint derivatives, suitable for cubic Hermite dense output)
//! to a callback which may continue, rescale the state by a positive factor
//! (legitimate for linear systems only — caller's responsibility), or stop.

use nalgebra::DVector;

use crate::matlin::C64;

/// Tolerances and limits for one integration run.
#[derive(Debug, Clone)]
pub struct RkOpts {
    pub rtol: f64,
    pub atol: f64,
    /// Hard cap on the step size (useful to guarantee output resolution).
    pub h_max: Option<f64>,
    pub max_steps: usize,
}

impl Default for RkOpts {
    fn default() -> Self {
        RkOpts {
            rtol: 1e-9,
            atol: 1e-12,
            h_max: None,
            max_steps: 5_000_000,
        }
    }
}

/// Integration failure.
#[derive(Debug, Clone)]
pub enum RkError<E> {
    /// Controller drove the step below the representable minimum while the
    /// error estimate stayed too large.
    StepSizeUnderflow { t: f64 },
    /// Accepted-step budget exhausted.
    MaxSteps { t: f64 },
    /// Right-hand side failed and shrinking the step did not help.
    Rhs { t: f64, source: E },
}

/// One accepted step, exposed to the observer callback.
pub struct Step<'a> {
    pub t0: f64,
    pub t1: f64,
    pub y0: &'a DVector<C64>,
    pub y1: &'a DVector<C64>,
    pub f0: &'a DVector<C64>,
    pub f1: &'a DVector<C64>,
}

/// Observer verdict after an accepted step.
pub enum Control {
    Continue,
    /// Multiply the state (and its derivative) by this positive factor before
    /// the next step.
    Rescale(f64),
    /// Stop integrating; `solve` returns with `stopped_early = true`.
    Stop,
}

/// Final state of a run.
#[derive(Debug)]
pub struct RkOutcome {
    pub t_final: f64,
    pub y_final: DVector<C64>,
    pub f_final: DVector<C64>,
    pub accepted: usize,
    pub rejected: usize,
    pub stopped_early: bool,
    /// Step size in force at the end (last accepted step's size).
    pub h_last: f64,
}

// Dormand–Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Difference between 5th- and embedded 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;
const ALPHA: f64 = 0.2 - 0.75 * BETA;

fn h_floor(t: f64) -> f64 {
    1e-14 * t.abs().max(1.0)
}

/// RMS of componentwise moduli against mixed absolute/relative scales.
fn error_norm(err: &DVector<C64>, y0: &DVector<C64>, y1: &DVector<C64>, opts: &RkOpts) -> f64 {
    let n = err.len();
    let mut acc = 0.0;
    for i in 0..n {
        let sc = opts.atol + opts.rtol * y0[i].norm().max(y1[i].norm());
        let r = err[i].norm() / sc;
        acc += r * r;
    }
    (acc / n as f64).sqrt()
}

/// Automatic initial step size (standard warm-start heuristic: match the
/// scale of the solution and its first derivative, then verify with an Euler
/// probe of the second derivative).
fn initial_step<E>(
    rhs: &mut impl FnMut(f64, &DVector<C64>) -> Result<DVector<C64>, E>,
    t0: f64,
    y0: &DVector<C64>,
    f0: &DVector<C64>,
    t_end: f64,
    opts: &RkOpts,
) -> f64 {
    let span = t_end - t0;
    let sc = |y: &DVector<C64>, i: usize| opts.atol + opts.rtol * y[i].norm();
    let n = y0.len();
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..n {
        let s = sc(y0, i);
        d0 += (y0[i].norm() / s).powi(2);
        d1 += (f0[i].norm() / s).powi(2);
    }
    d0 = (d0 / n as f64).sqrt();
    d1 = (d1 / n as f64).sqrt();
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h0 = h0.min(span.abs());
    let y1 = y0 + f0 * C64::new(h0, 0.0);
    let h1 = match rhs(t0 + h0, &y1) {
        Ok(f1) => {
            let mut d2 = 0.0;
            for i in 0..n {
                let s = sc(y0, i);
                d2 += ((f1[i] - f0[i]).norm() / s).powi(2);
            }
            d2 = (d2 / n as f64).sqrt() / h0;
            let d = d1.max(d2);
            if d <= 1e-15 {
                (h0 * 1e-3).max(1e-6)
            } else {
                (0.01 / d).powf(0.2)
            }
        }
        Err(_) => h0 * 1e-3,
    };
    let mut h = (100.0 * h0).min(h1).min(span.abs());
    if let Some(hm) = opts.h_max {
        h = h.min(hm);
    }
    h.max(h_floor(t0))
}

/// Integrate `y' = rhs(t, y)` from `t0` to `t_end` (`t_end > t0`).
///
/// The observer runs after every accepted step. RHS failures trigger step
/// shrinking; if the failure persists at the minimum step it is reported with
/// the last error as the source.
pub fn solve<E>(
    rhs: &mut impl FnMut(f64, &DVector<C64>) -> Result<DVector<C64>, E>,
    t0: f64,
    y0: DVector<C64>,
    t_end: f64,
    opts: &RkOpts,
    on_step: &mut impl FnMut(Step<'_>) -> Control,
) -> Result<RkOutcome, RkError<E>> {
    assert!(t_end > t0, "integration horizon must be forward");
    assert!(opts.rtol > 0.0 && opts.atol > 0.0, "tolerances must be positive");

    let cplx = |x: f64| C64::new(x, 0.0);
    let mut t = t0;
    let mut y = y0;
    let mut f = match rhs(t, &y) {
        Ok(f) => f,
        Err(source) => return Err(RkError::Rhs { t, source }),
    };
    let mut h = initial_step(rhs, t, &y, &f, t_end, opts);
    let mut err_old: f64 = 1e-4;
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut just_rejected = false;
    let mut h_last = h;

    while t < t_end - h_floor(t) {
        if accepted >= opts.max_steps {
            return Err(RkError::MaxSteps { t });
        }
        if let Some(hm) = opts.h_max {
            h = h.min(hm);
        }
        if t + h > t_end {
            h = t_end - t;
        }
        if h < h_floor(t) {
            return Err(RkError::StepSizeUnderflow { t });
        }

        // Stage evaluations; an RHS failure shrinks the step and retries.
        let stage_result = (|| -> Result<(DVector<C64>, DVector<C64>, DVector<C64>), E> {
            let k1 = f.clone();
            let k2 = rhs(t + C2 * h, &(&y + &k1 * cplx(h * A21)))?;
            let k3 = rhs(t + C3 * h, &(&y + &k1 * cplx(h * A31) + &k2 * cplx(h * A32)))?;
            let k4 = rhs(
                t + C4 * h,
                &(&y + &k1 * cplx(h * A41) + &k2 * cplx(h * A42) + &k3 * cplx(h * A43)),
            )?;
            let k5 = rhs(
                t + C5 * h,
                &(&y
                    + &k1 * cplx(h * A51)
                    + &k2 * cplx(h * A52)
                    + &k3 * cplx(h * A53)
                    + &k4 * cplx(h * A54)),
            )?;
            let k6 = rhs(
                t + h,
                &(&y
                    + &k1 * cplx(h * A61)
                    + &k2 * cplx(h * A62)
                    + &k3 * cplx(h * A63)
                    + &k4 * cplx(h * A64)
                    + &k5 * cplx(h * A65)),
            )?;
            let y_new = &y
                + &k1 * cplx(h * B1)
                + &k3 * cplx(h * B3)
                + &k4 * cplx(h * B4)
                + &k5 * cplx(h * B5)
                + &k6 * cplx(h * B6);
            let k7 = rhs(t + h, &y_new)?;
            let err_vec = &k1 * cplx(h * E1)
                + &k3 * cplx(h * E3)
                + &k4 * cplx(h * E4)
                + &k5 * cplx(h * E5)
                + &k6 * cplx(h * E6)
                + &k7 * cplx(h * E7);
            Ok((y_new, k7, err_vec))
        })();

        let (y_new, f_new, err_vec) = match stage_result {
            Ok(v) => v,
            Err(source) => {
                // Retry with a much smaller step; give up at the floor.
                if h <= 4.0 * h_floor(t) {
                    return Err(RkError::Rhs { t, source });
                }
                h *= 0.25;
                just_rejected = true;
                continue;
            }
        };

        let err = error_norm(&err_vec, &y, &y_new, opts);
        if err <= 1.0 {
            // Accept.
            h_last = h;
            let t_new = t + h;
            let control = on_step(Step {
                t0: t,
                t1: t_new,
                y0: &y,
                y1: &y_new,
                f0: &f,
                f1: &f_new,
            });
            t = t_new;
            y = y_new;
            f = f_new;
            accepted += 1;
            match control {
                Control::Continue => {}
                Control::Rescale(s) => {
                    assert!(s > 0.0 && s.is_finite(), "rescale factor must be positive");
                    y *= cplx(s);
                    f *= cplx(s);
                }
                Control::Stop => {
                    return Ok(RkOutcome {
                        t_final: t,
                        y_final: y,
                        f_final: f,
                        accepted,
                        rejected,
                        stopped_early: true,
                        h_last,
                    });
                }
            }
            // PI controller.
            let err_cl = err.max(1e-10);
            let mut fac = SAFETY * err_cl.powf(-ALPHA) * err_old.powf(BETA);
            let fac_max = if just_rejected { 1.0 } else { FAC_MAX };
            fac = fac.clamp(FAC_MIN, fac_max);
            h *= fac;
            err_old = err_cl.max(1e-4);
            just_rejected = false;
        } else {
            // Reject: classic shrink, no growth allowed on the retry.
            rejected += 1;
            let fac = (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, 1.0).min(0.9);
            h *= fac;
            just_rejected = true;
        }
    }

    Ok(RkOutcome {
        t_final: t,
        y_final: y,
        f_final: f,
        accepted,
        rejected,
        stopped_early: false,
        h_last,
    })
}

/// Cubic Hermite interpolation on one accepted step (fourth-order accurate
/// against the underlying fifth-order solution).
pub fn hermite_eval(
    t0: f64,
    t1: f64,
    y0: &DVector<C64>,
    f0: &DVector<C64>,
    y1: &DVector<C64>,
    f1: &DVector<C64>,
    t: f64,
) -> DVector<C64> {
    let h = t1 - t0;
    let th = ((t - t0) / h).clamp(0.0, 1.0);
    let th2 = th * th;
    let th3 = th2 * th;
    let h00 = 2.0 * th3 - 3.0 * th2 + 1.0;
    let h10 = th3 - 2.0 * th2 + th;
    let h01 = -2.0 * th3 + 3.0 * th2;
    let h11 = th3 - th2;
    let c = |x: f64| C64::new(x, 0.0);
    y0 * c(h00) + f0 * c(h10 * h) + y1 * c(h01) + f1 * c(h11 * h)
}

/// Time derivative of [`hermite_eval`] at `t`.
pub fn hermite_eval_deriv(
    t0: f64,
    t1: f64,
    y0: &DVector<C64>,
    f0: &DVector<C64>,
    y1: &DVector<C64>,
    f1: &DVector<C64>,
    t: f64,
) -> DVector<C64> {
    let h = t1 - t0;
    let th = ((t - t0) / h).clamp(0.0, 1.0);
    let th2 = th * th;
    let d00 = (6.0 * th2 - 6.0 * th) / h;
    let d10 = 3.0 * th2 - 4.0 * th + 1.0;
    let d01 = (-6.0 * th2 + 6.0 * th) / h;
    let d11 = 3.0 * th2 - 2.0 * th;
    let c = |x: f64| C64::new(x, 0.0);
    y0 * c(d00) + f0 * c(d10) + y1 * c(d01) + f1 * c(d11)
}
