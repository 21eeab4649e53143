//! Numerical oscillation analysis for extended linear matrix Hamiltonian systems.
//!
//! The systems under study have the form
//!
//! ```text
//! Phi' = A(t) Phi + B(t) Psi,
//! Psi' = C(t) Phi + [mu(t) I - A*(t)] Psi,        t >= t0,
//! ```
//!
//! where `A`, `B`, `C` are continuous complex n x n matrix functions, `B` and `C`
//! are Hermitian, and `mu` is a real scalar function. A solution `(Phi, Psi)` is
//! *oscillatory* when `det Phi(t)` has arbitrarily large zeros.
//!
//! The crate is organised bottom-up:
//!
//! * [`matlin`] - dense complex matrix utilities (Hermitian eigensolves, PSD square
//!   roots, trace functionals, and the inequality primitives the criteria rely on);
//! * [`coeffs`] - a small expression language for time-dependent coefficients,
//!   plus system validation;
//! * [`integrate`] - adaptive Runge-Kutta integration of the matrix system, its
//!   scalar special case, and the associated Riccati equations, with det-Phi zero
//!   detection and escape detection;
//! * [`riccati`] - the coefficient transform behind the Riccati substitution,
//!   solution reconstruction, and integral-equation residual checks;
//! * [`criteria`] - the oscillation criteria catalogue (labelled 1.1, 2.1, 3.1,
//!   3.2, 3.3) with divergence estimates and a cross-checking comparison driver.

pub mod coeffs;
pub mod criteria;
pub mod integrate;
pub mod matlin;
pub mod quad;
pub mod riccati;
