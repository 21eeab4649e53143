//! Cumulative quadrature on sampled grids.
//!
//! All running integrals in this crate (criterion functionals, integral
//! Riccati residuals, `exp(∫mu)` weights) are computed by one scheme: a
//! composite Simpson backbone over consecutive interval pairs, with the
//! quadratic through the three nearest nodes used for the in-between and
//! trailing nodes. The scheme is exact for quadratics, works on non-uniform
//! grids, and is globally fourth-order on smooth integrands.

/// Integral over `[a, b]` of the quadratic interpolating `(x0,f0)`, `(x1,f1)`,
/// `(x2,f2)` (nodes pairwise distinct).
fn quadratic_segment(x: [f64; 3], f: [f64; 3], a: f64, b: f64) -> f64 {
    // Shift to coordinates centered on the middle node: the antiderivative
    // terms then stay O(h^3) instead of O(x^3), which avoids catastrophic
    // cancellation when the window sits far from the origin.
    let o = x[1];
    let xs = [x[0] - o, 0.0, x[2] - o];
    let (a, b) = (a - o, b - o);
    let mut total = 0.0;
    for i in 0..3 {
        let (u, v) = match i {
            0 => (xs[1], xs[2]),
            1 => (xs[0], xs[2]),
            _ => (xs[0], xs[1]),
        };
        let denom = (xs[i] - u) * (xs[i] - v);
        // ∫ (x-u)(x-v) dx = x^3/3 - (u+v) x^2/2 + u v x
        let anti = |t: f64| t * t * t / 3.0 - 0.5 * (u + v) * t * t + u * v * t;
        total += f[i] * (anti(b) - anti(a)) / denom;
    }
    total
}

/// Running integral of sampled values: returns `I` with `I[k] = ∫_{ts[0]}^{ts[k]} f`.
///
/// Panics if the grid has fewer than 1 point, mismatched lengths, or
/// non-increasing times. With exactly 2 points the trapezoid rule is used.
pub fn cumulative_integral(ts: &[f64], fs: &[f64]) -> Vec<f64> {
    assert_eq!(ts.len(), fs.len(), "grid/value length mismatch");
    assert!(!ts.is_empty(), "empty grid");
    for w in ts.windows(2) {
        assert!(w[1] > w[0], "grid must be strictly increasing");
    }
    let n = ts.len();
    let mut out = vec![0.0; n];
    if n == 1 {
        return out;
    }
    if n == 2 {
        out[1] = 0.5 * (fs[0] + fs[1]) * (ts[1] - ts[0]);
        return out;
    }
    // Simpson backbone on pairs (k, k+1, k+2); odd in-between nodes from the
    // same quadratic, trailing odd interval from the last three nodes.
    let mut k = 0;
    while k + 2 < n {
        let x = [ts[k], ts[k + 1], ts[k + 2]];
        let f = [fs[k], fs[k + 1], fs[k + 2]];
        out[k + 1] = out[k] + quadratic_segment(x, f, ts[k], ts[k + 1]);
        out[k + 2] = out[k] + quadratic_segment(x, f, ts[k], ts[k + 2]);
        k += 2;
    }
    if k + 1 < n {
        // One interval left; integrate the quadratic through the final three nodes.
        let x = [ts[n - 3], ts[n - 2], ts[n - 1]];
        let f = [fs[n - 3], fs[n - 2], fs[n - 1]];
        out[n - 1] = out[n - 2] + quadratic_segment(x, f, ts[n - 2], ts[n - 1]);
    }
    out
}

/// Definite integral of sampled values over the whole grid.
pub fn integral(ts: &[f64], fs: &[f64]) -> f64 {
    *cumulative_integral(ts, fs).last().unwrap()
}

/// Linear interpolation of a sampled function at `t` (clamped to the grid range).
pub fn interp_linear(ts: &[f64], fs: &[f64], t: f64) -> f64 {
    assert_eq!(ts.len(), fs.len());
    assert!(!ts.is_empty());
    if t <= ts[0] {
        return fs[0];
    }
    if t >= ts[ts.len() - 1] {
        return fs[fs.len() - 1];
    }
    let idx = match ts.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
        Ok(i) => return fs[i],
        Err(i) => i,
    };
    let (t0, t1) = (ts[idx - 1], ts[idx]);
    let w = (t - t0) / (t1 - t0);
    fs[idx - 1] * (1.0 - w) + fs[idx] * w
}

/// Uniform grid with `intervals + 1` nodes spanning `[a, b]`.
pub fn uniform_grid(a: f64, b: f64, intervals: usize) -> Vec<f64> {
    assert!(b > a, "grid span must be positive");
    assert!(intervals >= 1);
    let h = (b - a) / intervals as f64;
    let mut ts: Vec<f64> = (0..=intervals).map(|k| a + h * k as f64).collect();
    // Pin the endpoint exactly.
    *ts.last_mut().unwrap() = b;
    ts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_on_quadratics() {
        let ts = uniform_grid(0.0, 3.0, 7); // odd interval count exercises the tail
        let fs: Vec<f64> = ts.iter().map(|t| 2.0 * t * t - t + 0.5).collect();
        let want: Vec<f64> = ts
            .iter()
            .map(|t| 2.0 * t * t * t / 3.0 - 0.5 * t * t + 0.5 * t)
            .collect();
        let got = cumulative_integral(&ts, &fs);
        for (g, w) in got.iter().zip(want.iter()) {
            assert!((g - w).abs() < 1e-12 * w.abs().max(1.0), "{g} vs {w}");
        }
    }

    #[test]
    fn fourth_order_on_sin() {
        let run = |n: usize| -> f64 {
            let ts = uniform_grid(0.0, 2.0, n);
            let fs: Vec<f64> = ts.iter().map(|t| t.sin()).collect();
            (integral(&ts, &fs) - (1.0 - 2.0f64.cos())).abs()
        };
        let e1 = run(64);
        let e2 = run(128);
        assert!(e1 / e2 > 10.0, "convergence order too low: {e1} -> {e2}");
        assert!(run(512) < 1e-11);
    }

    #[test]
    fn nonuniform_grid() {
        // Geometric-ish grid, integrand exp(t): compare against the closed form.
        let mut ts = vec![0.0f64];
        let mut h = 0.003;
        while *ts.last().unwrap() < 1.0 {
            let next = ts.last().unwrap() + h;
            ts.push(next);
            h *= 1.01;
        }
        let fs: Vec<f64> = ts.iter().map(|t| t.exp()).collect();
        let got = integral(&ts, &fs);
        let want = ts.last().unwrap().exp() - 1.0;
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }

    #[test]
    fn interp_linear_basics() {
        let ts = [0.0, 1.0, 3.0];
        let fs = [0.0, 2.0, 2.0];
        assert_eq!(interp_linear(&ts, &fs, -1.0), 0.0);
        assert_eq!(interp_linear(&ts, &fs, 5.0), 2.0);
        assert!((interp_linear(&ts, &fs, 0.5) - 1.0).abs() < 1e-15);
        assert!((interp_linear(&ts, &fs, 2.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn two_point_grid_is_trapezoid() {
        let got = cumulative_integral(&[0.0, 2.0], &[1.0, 3.0]);
        assert_eq!(got, vec![0.0, 4.0]);
    }
}
