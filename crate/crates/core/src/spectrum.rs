//! Analytic spectrum of the damped target wave operator.
//!
//! Mode `n` of `w_tt = (1 + d∂_t)(w_xx − c w)` with `w_x(0) = 0`, `w(D) = 0`
//! has the pair of eigenvalues solving
//!
//! ```text
//! σ² + d μ σ + μ = 0,    μ = c + (π/2 + πn)²,
//! ```
//!
//! complex for `d²μ < 4` (and then lying on the circle of radius `1/d`
//! centered at `−1/d`), real for large `n` with one branch approaching
//! `−1/d` and the other diverging to `−∞`. Only the analytic spectrum is
//! computed here; the time stepper's stability is checked through energy
//! decay instead of a discrete eigensolver.

use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SpectrumError {
    #[error("n_max = {0} does not reach the real eigenvalue regime (need d²μ > 4)")]
    NoRealBranch(usize),
}

/// Both roots of the per-mode quadratic, with their classification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenPair {
    pub mode_index: usize,
    /// `μ = c + (π/2 + πn)²`
    pub mu: f64,
    pub sigma_plus: Complex64,
    pub sigma_minus: Complex64,
    pub is_complex_pair: bool,
}

/// Eigenvalues of mode `n`, via the numerically stable quadratic formula:
/// the larger-magnitude root is computed without cancellation and the other
/// recovered from the product `σ₊σ₋ = μ`.
pub fn eigenvalues(n: usize, c: f64, d: f64) -> EigenPair {
    assert!(c >= 0.0, "c must be nonnegative, got {c}");
    assert!(d > 0.0, "d must be positive, got {d}");
    let wave = PI / 2.0 + PI * n as f64;
    let mu = c + wave * wave;
    let is_complex_pair = d * d * mu < 4.0;
    let (sigma_plus, sigma_minus) = if is_complex_pair {
        let re = -d * mu / 2.0;
        let im = (mu - re * re).sqrt();
        (Complex64::new(re, im), Complex64::new(re, -im))
    } else {
        let disc = (d * mu * d * mu - 4.0 * mu).sqrt();
        let fast = -(d * mu + disc) / 2.0;
        let slow = mu / fast;
        (Complex64::new(slow, 0.0), Complex64::new(fast, 0.0))
    };
    EigenPair {
        mode_index: n,
        mu,
        sigma_plus,
        sigma_minus,
        is_complex_pair,
    }
}

/// Distance of a complex pair from the locus
/// `(Re σ + 1/d)² + (Im σ)² = 1/d²`; zero analytically.
pub fn circle_residual(pair: &EigenPair, d: f64) -> f64 {
    assert!(
        pair.is_complex_pair,
        "circle locus applies to complex pairs only (mode {})",
        pair.mode_index
    );
    let re = pair.sigma_plus.re + 1.0 / d;
    let im = pair.sigma_plus.im;
    (re * re + im * im - 1.0 / (d * d)).abs()
}

/// Real-branch trajectories over `0..=n_max`: the slow branch (smaller
/// magnitude, tending to `−1/d`) and the fast branch (tending to `−∞`).
/// Fails if the range never reaches the real regime.
pub fn branch_limits(c: f64, d: f64, n_max: usize) -> Result<(Vec<f64>, Vec<f64>), SpectrumError> {
    let mut slow = Vec::new();
    let mut fast = Vec::new();
    for n in 0..=n_max {
        let pair = eigenvalues(n, c, d);
        if !pair.is_complex_pair {
            slow.push(pair.sigma_plus.re);
            fast.push(pair.sigma_minus.re);
        }
    }
    if slow.is_empty() {
        return Err(SpectrumError::NoRealBranch(n_max));
    }
    debug_assert!(slow.windows(2).all(|w| w[1] >= w[0]), "slow branch monotone");
    debug_assert!(fast.windows(2).all(|w| w[1] <= w[0]), "fast branch monotone");
    Ok((slow, fast))
}
