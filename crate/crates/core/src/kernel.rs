//! Backstepping gain kernel and the machinery built on it.
//!
//! The kernel
//!
//! ```text
//! k(x,σ) = −c x I₁(√(c(x²−σ²))) / √(c(x²−σ²))
//! ```
//!
//! solves `k_xx = k_σσ + c k` with `k_σ(x,0) = 0` on the triangle
//! `0 ≤ σ ≤ x ≤ D` and has the finite diagonal limit `k(x,x) = −(c/2)x`. Its
//! boundary trace supplies the control-law weight
//! `cD·I₁(√(c(D²−σ²)))/√(c(D²−σ²)) = −k(D,σ)`, and the Volterra transform
//! `w = u − K̄ ∫₀ˣ k(x,σ) u(σ) dσ − K̄ ϑ` maps the error cascade onto the
//! damped target system `w_tt = (1 + d∂_t)(w_xx − c w)`, `w(D) = 0`.

use crate::solver::{Grid, WaveField};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("target stiffness shift c must be positive, got {0}")]
    StiffnessShift(f64),
    #[error("domain length must be positive, got {0}")]
    Domain(f64),
}

/// Target-system stiffness shift `c > 0` and domain length `D`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub c: f64,
    pub domain_length: f64,
}

impl KernelParams {
    pub fn new(c: f64, domain_length: f64) -> Result<Self, KernelError> {
        if !(c > 0.0) {
            return Err(KernelError::StiffnessShift(c));
        }
        if !(domain_length > 0.0) {
            return Err(KernelError::Domain(domain_length));
        }
        Ok(Self { c, domain_length })
    }
}

/// Modified Bessel function `I₁` by its power series
/// `Σ (z/2)^{2m+1} / (m!(m+1)!)`, summed until the term drops below
/// `1e−16` of the partial sum. The kernel only ever needs small arguments
/// (`z = √c·D ≈ 0.1` at nominal parameters); arguments beyond 60 are
/// rejected instead of switching to asymptotic forms.
pub fn bessel_i1(z: f64) -> f64 {
    assert!((0.0..=60.0).contains(&z), "bessel_i1 argument out of range: {z}");
    let half = 0.5 * z;
    let q = half * half;
    let mut term = half; // m = 0 term
    let mut sum = term;
    let mut m = 1.0f64;
    while term.abs() > 1e-16 * sum.abs() + 1e-300 {
        term *= q / (m * (m + 1.0));
        sum += term;
        m += 1.0;
    }
    sum
}

/// `I₁(z)/z` with the removable singularity handled: below `z = 1e−6` the
/// series `1/2 + z²/16 + z⁴/384` is used directly.
pub fn i1_ratio(z: f64) -> f64 {
    debug_assert!(z >= 0.0);
    if z <= 1e-6 {
        let q = z * z;
        0.5 + q / 16.0 + q * q / 384.0
    } else {
        bessel_i1(z) / z
    }
}

/// Gain kernel `k(x,σ)`. The kernel depends on σ only through σ², so
/// negative σ evaluates the even extension (used by derivative checks at
/// σ = 0); `|σ| > x` is rejected.
pub fn kernel_eval(params: &KernelParams, x: f64, sigma: f64) -> f64 {
    assert!(
        sigma.abs() <= x,
        "kernel evaluated outside the triangle: sigma = {sigma}, x = {x}"
    );
    debug_assert!(x <= params.domain_length * (1.0 + 1e-12));
    let z = (params.c * (x * x - sigma * sigma)).max(0.0).sqrt();
    -(params.c * x * i1_ratio(z))
}

/// Control-law integrand weight `cD·I₁(√(c(D²−σ²)))/√(c(D²−σ²))`; equals
/// `−k(D,σ)`.
pub fn gain_weight(params: &KernelParams, sigma: f64) -> f64 {
    let d = params.domain_length;
    assert!(
        sigma.abs() <= d,
        "gain weight evaluated outside [0, D]: sigma = {sigma}"
    );
    let z = (params.c * (d * d - sigma * sigma)).max(0.0).sqrt();
    params.c * d * i1_ratio(z)
}

/// Trapezoid-rule quadrature of `gain_weight(σ)·u(σ)` over the grid. The
/// `u` samples are read from the field's displacement slots.
pub fn control_integral(params: &KernelParams, u_field: &WaveField, grid: &Grid) -> f64 {
    assert_eq!(u_field.displacement.len(), grid.points, "field/grid mismatch");
    let weighted: Vec<f64> = (0..grid.points)
        .map(|i| gain_weight(params, grid.x(i)) * u_field.displacement[i])
        .collect();
    crate::solver::trapezoid(&weighted, grid.dx)
}

/// Volterra backstepping transform
/// `w(x_i) = u(x_i) − K̄·∫₀^{x_i} k(x_i,σ) u(σ) dσ − K̄·ϑ`
/// with composite-trapezoid quadrature on the solver grid. `K̄ = K·H < 0` in
/// closed loop; `K̄ = 0` degenerates to the identity on `u` and is allowed
/// for tests.
pub fn backstepping_transform(
    params: &KernelParams,
    u_field: &WaveField,
    vartheta: f64,
    k_bar: f64,
    grid: &Grid,
) -> Vec<f64> {
    KernelTable::new(params, grid).transform(u_field, vartheta, k_bar)
}

/// Kernel samples cached on a grid: `k(x_i, σ_j)` for `j ≤ i` plus the gain
/// weights. The closed loop evaluates the transform every step; caching
/// avoids re-summing Bessel series.
#[derive(Debug, Clone)]
pub struct KernelTable {
    /// lower-triangular, row i at offset i(i+1)/2
    k: Vec<f64>,
    gain: Vec<f64>,
    dx: f64,
    points: usize,
}

impl KernelTable {
    pub fn new(params: &KernelParams, grid: &Grid) -> Self {
        let n = grid.points;
        let mut k = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            let x = grid.x(i);
            for j in 0..=i {
                k.push(kernel_eval(params, x, grid.x(j)));
            }
        }
        let gain = (0..n).map(|j| gain_weight(params, grid.x(j))).collect();
        Self {
            k,
            gain,
            dx: grid.dx,
            points: n,
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        let off = i * (i + 1) / 2;
        &self.k[off..off + i + 1]
    }

    /// `∫₀^{x_i} k(x_i,σ) u(σ) dσ` by composite trapezoid over nodes `0..=i`.
    fn volterra_integral(&self, i: usize, u: &[f64]) -> f64 {
        if i == 0 {
            return 0.0;
        }
        let row = self.row(i);
        let mut s = 0.5 * (row[0] * u[0] + row[i] * u[i]);
        for j in 1..i {
            s += row[j] * u[j];
        }
        s * self.dx
    }

    pub fn transform(&self, u_field: &WaveField, vartheta: f64, k_bar: f64) -> Vec<f64> {
        self.transform_slice(&u_field.displacement, vartheta, k_bar)
    }

    pub fn transform_slice(&self, u: &[f64], vartheta: f64, k_bar: f64) -> Vec<f64> {
        assert_eq!(u.len(), self.points, "field/grid mismatch");
        (0..self.points)
            .map(|i| u[i] - k_bar * self.volterra_integral(i, u) - k_bar * vartheta)
            .collect()
    }

    /// `∫₀ᴰ gain_weight(σ)·v(σ) dσ` with the cached weights; same quadrature
    /// as [`control_integral`].
    pub fn boundary_integral(&self, values: &[f64]) -> f64 {
        assert_eq!(values.len(), self.points, "field/grid mismatch");
        let weighted: Vec<f64> = (0..self.points)
            .map(|i| self.gain[i] * values[i])
            .collect();
        crate::solver::trapezoid(&weighted, self.dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params() -> KernelParams {
        KernelParams::new(0.01, 1.0).unwrap()
    }

    /// Independent series oracle for I₁(z)/z, summed to fixed depth.
    fn ratio_series_oracle(z: f64) -> f64 {
        let q = z * z / 4.0;
        let mut term = 0.5;
        let mut sum = term;
        for m in 1..25 {
            term *= q / (m as f64 * (m as f64 + 1.0));
            sum += term;
        }
        sum
    }

    #[test]
    fn i1_at_zero_is_zero() {
        assert_eq!(bessel_i1(0.0), 0.0);
    }

    #[test]
    fn i1_at_one_matches_reference() {
        // 40-digit series evaluation: I1(1) = 0.5651591039924850272...
        assert!((bessel_i1(1.0) - 0.565159103992485).abs() < 1e-15);
    }

    #[test]
    fn i1_leading_term_for_small_argument() {
        let z = 1e-8;
        assert!((bessel_i1(z) / (z / 2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn i1_moderate_arguments_match_reference() {
        // I1(2) = 1.590636854637329063..., I1(30) = 7.685320389389569995e11
        assert!((bessel_i1(2.0) - 1.590636854637329).abs() < 1e-14);
        assert!((bessel_i1(30.0) / 7.685320389389569e11 - 1.0).abs() < 1e-13);
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn i1_rejects_oversized_argument() {
        bessel_i1(61.0);
    }

    #[test]
    fn ratio_limit_at_zero() {
        assert_eq!(i1_ratio(0.0), 0.5);
    }

    #[test]
    fn ratio_branches_agree_with_series() {
        for &z in &[1e-7, 1e-6, 2e-6, 1e-5, 1e-3, 0.1, 2.0] {
            let got = i1_ratio(z);
            let want = ratio_series_oracle(z);
            assert!((got - want).abs() <= 1e-14 * want, "z = {z}");
        }
        assert!((i1_ratio(2.0) - 0.7953184273186645).abs() < 1e-15);
    }

    #[test]
    fn ratio_branch_switch_is_continuous() {
        let below = i1_ratio(1e-6 * (1.0 - 1e-9));
        let above = i1_ratio(1e-6 * (1.0 + 1e-9));
        assert!(((below - above) / below).abs() <= 1e-13);
    }

    #[test]
    fn kernel_diagonal_limit() {
        let p = params();
        for &x in &[0.1, 0.5, 1.0] {
            assert!((kernel_eval(&p, x, x) + 0.5 * p.c * x).abs() <= 1e-12 * p.c);
        }
    }

    #[test]
    fn kernel_vanishes_with_c() {
        let p = KernelParams::new(1e-12, 1.0).unwrap();
        for &(x, s) in &[(1.0, 0.0), (0.7, 0.3), (0.2, 0.2)] {
            assert!(kernel_eval(&p, x, s).abs() <= 1e-12 * x);
        }
    }

    /// 5-point finite-difference residual of `k_xx − k_σσ − c·k` at (x,σ).
    fn kernel_pde_residual(p: &KernelParams, x: f64, s: f64, h: f64) -> f64 {
        let kxx =
            (kernel_eval(p, x + h, s) - 2.0 * kernel_eval(p, x, s) + kernel_eval(p, x - h, s))
                / (h * h);
        let kss =
            (kernel_eval(p, x, s + h) - 2.0 * kernel_eval(p, x, s) + kernel_eval(p, x, s - h))
                / (h * h);
        kxx - kss - p.c * kernel_eval(p, x, s)
    }

    #[test]
    fn kernel_pde_residual_refines_second_order() {
        let p = params();
        let max_res = |h: f64| {
            let mut worst: f64 = 0.0;
            for i in 2..=8 {
                let x = 0.1 * i as f64;
                for j in 0..=6 {
                    let s = x * 0.12 * j as f64;
                    worst = worst.max(kernel_pde_residual(&p, x, s, h).abs());
                }
            }
            worst
        };
        let coarse = max_res(0.04);
        let fine = max_res(0.02);
        assert!(coarse > 0.0);
        let ratio = coarse / fine;
        assert!((3.0..5.0).contains(&ratio), "ratio = {ratio}");
    }

    #[test]
    fn kernel_sigma_slope_vanishes_at_zero() {
        let p = params();
        let h = 1e-4;
        for &x in &[0.3, 0.7, 1.0] {
            // exact by evenness
            let sym = (kernel_eval(&p, x, h) - kernel_eval(&p, x, -h)) / (2.0 * h);
            assert_eq!(sym, 0.0);
            // one-sided second-order estimate, non-vacuous
            let one_sided = (-3.0 * kernel_eval(&p, x, 0.0) + 4.0 * kernel_eval(&p, x, h)
                - kernel_eval(&p, x, 2.0 * h))
                / (2.0 * h);
            assert!(one_sided.abs() <= 1e-8, "slope = {one_sided}");
        }
    }

    #[test]
    #[should_panic(expected = "outside the triangle")]
    fn kernel_rejects_sigma_above_x() {
        kernel_eval(&params(), 0.5, 0.6);
    }

    #[test]
    fn gain_weight_diagonal_limit() {
        let p = params();
        assert!((gain_weight(&p, 1.0) - 0.5 * p.c * p.domain_length).abs() <= 1e-15);
    }

    #[test]
    fn gain_weight_at_zero_matches_reference() {
        // c·D·I1(0.1)/0.1 with c = 0.01, D = 1
        let p = params();
        assert!((gain_weight(&p, 0.0) - 0.005006252604709269).abs() < 1e-17);
    }

    proptest! {
        #[test]
        fn gain_weight_is_negated_boundary_kernel(s01 in 0.0..=1.0f64) {
            let p = params();
            let sigma = s01 * p.domain_length;
            prop_assert_eq!(
                gain_weight(&p, sigma),
                -kernel_eval(&p, p.domain_length, sigma)
            );
        }
    }

    #[test]
    fn control_integral_of_zero_field() {
        let grid = Grid::new(1.0, 101).unwrap();
        let u = WaveField::zero(&grid);
        assert_eq!(control_integral(&params(), &u, &grid), 0.0);
    }

    #[test]
    fn control_integral_matches_refined_quadrature() {
        let p = params();
        let ones = |grid: &Grid| WaveField::from_profiles(grid, |_| 1.0, |_| 0.0, 0.0);
        let coarse_grid = Grid::new(1.0, 101).unwrap();
        let fine_grid = Grid::new(1.0, 10001).unwrap();
        let coarse = control_integral(&p, &ones(&coarse_grid), &coarse_grid);
        let fine = control_integral(&p, &ones(&fine_grid), &fine_grid);
        assert!((coarse - fine).abs() <= 1e-6, "coarse = {coarse}, fine = {fine}");
    }

    #[test]
    fn control_integral_vanishes_with_c() {
        let p = KernelParams::new(1e-12, 1.0).unwrap();
        let grid = Grid::new(1.0, 101).unwrap();
        let u = WaveField::from_profiles(&grid, |_| 1.0, |_| 0.0, 0.0);
        assert!(control_integral(&p, &u, &grid).abs() <= 1e-10);
    }

    #[test]
    fn transform_of_zero_is_zero() {
        let grid = Grid::new(1.0, 101).unwrap();
        let u = WaveField::zero(&grid);
        let w = backstepping_transform(&params(), &u, 0.0, -0.2, &grid);
        assert!(w.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn transform_with_zero_gain_is_identity() {
        let grid = Grid::new(1.0, 101).unwrap();
        let u = WaveField::from_profiles(&grid, |x| (3.0 * x).sin(), |_| 0.0, 0.0);
        let w = backstepping_transform(&params(), &u, 1.7, 0.0, &grid);
        assert_eq!(w, u.displacement);
    }

    #[test]
    fn transform_matches_refined_quadrature_for_unit_field() {
        // w(x) = 1 − K̄ ∫₀ˣ k(x,σ) dσ, oracle integral on a 10001-node grid
        let p = params();
        let k_bar = -0.2;
        let grid = Grid::new(1.0, 101).unwrap();
        let u = WaveField::from_profiles(&grid, |_| 1.0, |_| 0.0, 0.0);
        let w = backstepping_transform(&p, &u, 0.0, k_bar, &grid);
        for &i in &[10usize, 50, 100] {
            let x = grid.x(i);
            let m = 10_000usize;
            let h = x / m as f64;
            let mut integral = 0.5 * (kernel_eval(&p, x, 0.0) + kernel_eval(&p, x, x));
            for j in 1..m {
                integral += kernel_eval(&p, x, h * j as f64);
            }
            integral *= h;
            let expect = 1.0 - k_bar * integral;
            assert!((w[i] - expect).abs() <= 1e-6, "node {i}: {} vs {expect}", w[i]);
        }
    }

    #[test]
    fn transform_boundary_vanishes_for_compatible_data() {
        // choose u(D) so that u(D) = K̄ϑ − K̄∫₀ᴰ k(D,σ)u dσ, then w(D) = 0
        let p = params();
        let grid = Grid::new(1.0, 101).unwrap();
        let k_bar = -0.2;
        let vartheta = 0.8;
        let n = grid.points;
        let mut u: Vec<f64> = (0..n).map(|i| (2.0 * grid.x(i)).cos()).collect();
        let table = KernelTable::new(&p, &grid);
        let row = table.row(n - 1);
        let mut partial = 0.5 * row[0] * u[0];
        for j in 1..n - 1 {
            partial += row[j] * u[j];
        }
        partial *= grid.dx;
        let diag_w = 0.5 * grid.dx * row[n - 1];
        // w(D) = u_D(1 − K̄·diag_w) − K̄·partial − K̄ϑ = 0; in control-law
        // form this is u(D) = K̄ϑ − K̄∫gain_weight·u with gain = −k(D,·)
        u[n - 1] = (k_bar * vartheta + k_bar * partial) / (1.0 - k_bar * diag_w);
        let field = WaveField::from_arrays(u, vec![0.0; n], 0.0);
        let w = table.transform(&field, vartheta, k_bar);
        assert!(w[n - 1].abs() <= 1e-12, "w(D) = {}", w[n - 1]);
    }

    #[test]
    fn cached_table_matches_direct_evaluation() {
        let p = params();
        let grid = Grid::new(1.0, 51).unwrap();
        let u = WaveField::from_profiles(&grid, |x| x * x - 0.3, |_| 0.0, 0.0);
        let direct = backstepping_transform(&p, &u, -0.4, -0.15, &grid);
        let cached = KernelTable::new(&p, &grid).transform(&u, -0.4, -0.15);
        assert_eq!(direct, cached);
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(KernelParams::new(0.0, 1.0).is_err());
        assert!(KernelParams::new(-1.0, 1.0).is_err());
        assert!(KernelParams::new(0.01, 0.0).is_err());
    }
}
