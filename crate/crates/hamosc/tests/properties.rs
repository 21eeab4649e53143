//! Property-based tests across the library's algebraic surfaces: the
//! expression parser, the dense matrix helpers, and the quadrature kernel.

use hamosc::coeffs::ScalarExpr;
use hamosc::matlin::{
    eig_hermitian, functional, hermitian_part, skew_part, sqrt_psd, CMatrix, FunctionalSpec, C64,
};
use hamosc::quad;
use proptest::prelude::*;

fn finite_f64() -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL.prop_filter("moderate magnitude", |v| v.abs() < 1e12)
}

fn matrix_entries(n: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), n * n)
}

fn to_matrix(n: usize, entries: &[(f64, f64)]) -> CMatrix {
    CMatrix::from_fn(n, |i, j| {
        let (re, im) = entries[i * n + j];
        C64::new(re, im)
    })
    .expect("finite entries")
}

proptest! {
    // ------------------------------------------------------------------
    // Expression parser
    // ------------------------------------------------------------------

    /// Any finite literal survives format → parse → eval exactly.
    #[test]
    fn literal_round_trip(v in finite_f64()) {
        let expr = ScalarExpr::parse(&format!("{v:e}")).expect("literal parses");
        let got = expr.eval(0.0).expect("literal evaluates");
        prop_assert_eq!(got, v);
    }

    /// Parsing is a homomorphism over the arithmetic operators.
    #[test]
    fn arithmetic_composition(a in -1e3..1e3f64, b in -1e3..1e3f64, t in -10.0..10.0f64) {
        let combined = format!("({a:e} + {b:e}*t) * ({b:e} - {a:e}*t)");
        let expr = ScalarExpr::parse(&combined).expect("composite parses");
        let got = expr.eval(t).expect("composite evaluates");
        let want = (a + b * t) * (b - a * t);
        let scale = want.abs().max(1.0);
        prop_assert!((got - want).abs() <= 1e-12 * scale, "{got} vs {want}");
    }

    /// The parser returns errors, never panics, on arbitrary input.
    #[test]
    fn parser_total_on_arbitrary_strings(s in "\\PC*") {
        if let Ok(expr) = ScalarExpr::parse(&s) {
            let _ = expr.eval(1.0);
        }
    }

    /// Function application matches the standard library on its domain.
    #[test]
    fn functions_match_std(t in 0.1..50.0f64) {
        for (text, want) in [
            ("sin(t)", t.sin()),
            ("cos(t)", t.cos()),
            ("exp(-t)", (-t).exp()),
            ("log(t)", t.ln()),
            ("sqrt(t)", t.sqrt()),
        ] {
            let expr = ScalarExpr::parse(text).expect("function parses");
            let got = expr.eval(t).expect("function evaluates");
            prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }

    // ------------------------------------------------------------------
    // Matrix helpers
    // ------------------------------------------------------------------

    /// M = herm(M) + i·skew(M) exactly reassembles any square matrix.
    #[test]
    fn hermitian_skew_decomposition(n in 1usize..5, seed in matrix_entries(4)) {
        let m = to_matrix(n, &seed[..n * n]);
        let h = hermitian_part(&m);
        let s = skew_part(&m);
        let rebuilt = h.add(&s.scale_c(C64::new(0.0, 1.0)));
        prop_assert!(rebuilt.sub(&m).norm() <= 1e-14 * m.norm().max(1.0));
    }

    /// The square root of G*G squares back to it.
    #[test]
    fn sqrt_psd_squares_back(n in 1usize..5, seed in matrix_entries(4)) {
        let g = to_matrix(n, &seed[..n * n]);
        let psd = g.adjoint().mul(&g);
        let root = sqrt_psd(&psd).expect("PSD square root");
        let err = root.mul(&root).sub(&psd).norm();
        prop_assert!(err <= 1e-10 * psd.norm().max(1.0), "error {err:.3e}");
    }

    /// The uniform functional is the normalized trace and sits inside the
    /// eigenvalue bracket of any Hermitian matrix.
    #[test]
    fn uniform_functional_bracket(n in 1usize..5, seed in matrix_entries(4)) {
        let m = hermitian_part(&to_matrix(n, &seed[..n * n]));
        let g = FunctionalSpec::uniform(n);
        let value = functional(&g, &m).expect("functional defined");
        let expected = m.trace().re / n as f64;
        prop_assert!((value - expected).abs() <= 1e-12 * expected.abs().max(1.0));
        let spectrum = eig_hermitian(&m).expect("Hermitian eigenvalues");
        let tol = 1e-10 * spectrum.max().abs().max(1.0);
        prop_assert!(spectrum.min() - tol <= value && value <= spectrum.max() + tol);
    }

    // ------------------------------------------------------------------
    // Quadrature kernel
    // ------------------------------------------------------------------

    /// Composite quadratic quadrature integrates quadratics exactly on
    /// arbitrary (nonuniform, strictly increasing) grids.
    #[test]
    fn quadrature_exact_for_quadratics(
        c0 in -5.0..5.0f64,
        c1 in -5.0..5.0f64,
        c2 in -5.0..5.0f64,
        gaps in prop::collection::vec(0.01..1.0f64, 2..40),
    ) {
        let mut ts = vec![0.0];
        for g in &gaps {
            ts.push(ts.last().unwrap() + g);
        }
        let fs: Vec<f64> = ts.iter().map(|&t| c0 + c1 * t + c2 * t * t).collect();
        let exact = |t: f64| c0 * t + c1 * t * t / 2.0 + c2 * t * t * t / 3.0;
        let cum = quad::cumulative_integral(&ts, &fs);
        for (k, &t) in ts.iter().enumerate() {
            let want = exact(t) - exact(ts[0]);
            let scale = want.abs().max(1.0);
            prop_assert!((cum[k] - want).abs() <= 1e-11 * scale,
                "node {k}: {} vs {want}", cum[k]);
        }
    }

    /// Linear interpolation reproduces node values and stays inside the
    /// local bracket between them.
    #[test]
    fn interp_linear_matches_nodes(
        gaps in prop::collection::vec(0.01..1.0f64, 2..20),
        values in prop::collection::vec(-10.0..10.0f64, 21),
    ) {
        let mut ts = vec![0.0];
        for g in &gaps {
            ts.push(ts.last().unwrap() + g);
        }
        let fs = &values[..ts.len()];
        for (k, &t) in ts.iter().enumerate() {
            prop_assert_eq!(quad::interp_linear(&ts, fs, t), fs[k]);
        }
        for w in ts.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let got = quad::interp_linear(&ts, fs, mid);
            let (lo, hi) = {
                let i = ts.iter().position(|&x| x == w[0]).unwrap();
                (fs[i].min(fs[i + 1]), fs[i].max(fs[i + 1]))
            };
            prop_assert!(got >= lo - 1e-12 && got <= hi + 1e-12);
        }
    }
}
