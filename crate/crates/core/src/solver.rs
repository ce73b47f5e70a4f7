//! Finite-difference integrator for the 1-D wave equation with Kelvin-Voigt
//! damping,
//!
//! ```text
//! ε α_tt = α_xx + d α_xxt,   α_x(0,t) = 0,   α(D,t) prescribed,
//! ```
//!
//! semi-discretized in space with second-order central differences (ghost
//! node at the Neumann end, Dirichlet node eliminated) and advanced in time
//! with the implicit trapezoidal rule. The Kelvin-Voigt term `d ∂_xxt` sends
//! one real eigenvalue branch to −∞, so explicit schemes are stiff; the
//! A-stable trapezoidal step costs one tridiagonal solve and keeps second
//! order in both `dx` and `dt`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("domain length must be positive, got {0}")]
    Domain(f64),
    #[error("grid needs at least 3 nodes, got {0}")]
    Points(usize),
    #[error("Kelvin-Voigt damping must be positive, got {0}")]
    Damping(f64),
    #[error("stiffness inverse must be positive, got {0}")]
    Stiffness(f64),
}

/// Uniform grid on `[0, D]` with `points` nodes including both boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub domain_length: f64,
    pub points: usize,
    pub dx: f64,
}

impl Grid {
    pub fn new(domain_length: f64, points: usize) -> Result<Self, SolverError> {
        if !(domain_length > 0.0) {
            return Err(SolverError::Domain(domain_length));
        }
        if points < 3 {
            return Err(SolverError::Points(points));
        }
        Ok(Self {
            domain_length,
            points,
            dx: domain_length / (points - 1) as f64,
        })
    }

    /// Node coordinate; the last node lands on `D` exactly.
    pub fn x(&self, i: usize) -> f64 {
        debug_assert!(i < self.points);
        self.domain_length * (i as f64 / (self.points - 1) as f64)
    }
}

/// Kelvin-Voigt damping `d` and stiffness inverse `ε` (the `ε α_tt` factor).
/// The seeking loop fixes `ε = 1`; other values are only exercised by the
/// cable-scale scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KvParams {
    pub damping: f64,
    pub stiffness_inverse: f64,
}

impl KvParams {
    pub fn new(damping: f64, stiffness_inverse: f64) -> Result<Self, SolverError> {
        if !(damping > 0.0) {
            return Err(SolverError::Damping(damping));
        }
        if !(stiffness_inverse > 0.0) {
            return Err(SolverError::Stiffness(stiffness_inverse));
        }
        Ok(Self {
            damping,
            stiffness_inverse,
        })
    }

    /// `ε = 1` plant.
    pub fn standard(damping: f64) -> Result<Self, SolverError> {
        Self::new(damping, 1.0)
    }
}

/// Displacement and velocity samples of one field at one instant.
///
/// The same type carries the plant state `α` and the derived control fields
/// (`u`, averaged fields): they all satisfy the same PDE. `displacement[last]`
/// always equals the most recently applied Dirichlet boundary value.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveField {
    pub displacement: Vec<f64>,
    pub velocity: Vec<f64>,
    pub time: f64,
}

impl WaveField {
    pub fn zero(grid: &Grid) -> Self {
        Self {
            displacement: vec![0.0; grid.points],
            velocity: vec![0.0; grid.points],
            time: 0.0,
        }
    }

    /// Sample displacement and velocity profiles at time `t`.
    pub fn from_profiles(
        grid: &Grid,
        mut displacement: impl FnMut(f64) -> f64,
        mut velocity: impl FnMut(f64) -> f64,
        t: f64,
    ) -> Self {
        Self {
            displacement: (0..grid.points).map(|i| displacement(grid.x(i))).collect(),
            velocity: (0..grid.points).map(|i| velocity(grid.x(i))).collect(),
            time: t,
        }
    }

    pub fn from_arrays(displacement: Vec<f64>, velocity: Vec<f64>, time: f64) -> Self {
        assert_eq!(displacement.len(), velocity.len());
        Self {
            displacement,
            velocity,
            time,
        }
    }

    fn assert_grid(&self, grid: &Grid) {
        assert_eq!(self.displacement.len(), grid.points, "field/grid mismatch");
        assert_eq!(self.velocity.len(), grid.points, "field/grid mismatch");
    }
}

/// Second-order discrete Laplacian on the grid, closed with the ghost-node
/// identity `α_xx(0) ≈ 2(α₁ − α₀)/dx²` at the Neumann end. The Dirichlet
/// node is excluded from the operator rows; its value enters through the
/// last row's stencil.
#[derive(Debug, Clone)]
pub struct Laplacian {
    inv_dx2: f64,
    points: usize,
}

/// Row coefficients of the interior block of the Laplacian (the square part
/// acting on the non-Dirichlet nodes).
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagCoeffs {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
}

pub fn discrete_laplacian(grid: &Grid) -> Laplacian {
    Laplacian {
        inv_dx2: 1.0 / (grid.dx * grid.dx),
        points: grid.points,
    }
}

impl Laplacian {
    /// Apply the operator to a full grid vector (length `points`, Dirichlet
    /// value included); returns one row per non-Dirichlet node.
    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.points, "field/grid mismatch");
        let m = self.points - 1;
        let mut out = Vec::with_capacity(m);
        out.push(2.0 * (values[1] - values[0]) * self.inv_dx2);
        for i in 1..m {
            out.push((values[i - 1] - 2.0 * values[i] + values[i + 1]) * self.inv_dx2);
        }
        out
    }

    /// Coefficients of the square block over the non-Dirichlet nodes.
    pub fn coefficients(&self) -> TridiagCoeffs {
        let m = self.points - 1;
        let s = self.inv_dx2;
        let mut sub = vec![s; m];
        sub[0] = 0.0; // unused entry
        let diag = vec![-2.0 * s; m];
        let mut sup = vec![s; m];
        sup[0] = 2.0 * s; // ghost-node closure doubles the first off-diagonal
        sup[m - 1] = 0.0; // unused entry
        TridiagCoeffs { sub, diag, sup }
    }
}

/// Thomas algorithm. The step matrix is strictly diagonally dominant, so no
/// pivoting is needed; a vanishing pivot is an internal error.
fn solve_tridiag(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut pivot = diag[0];
    assert!(pivot != 0.0, "singular tridiagonal system");
    c[0] = sup[0] / pivot;
    rhs[0] /= pivot;
    for i in 1..n {
        pivot = diag[i] - sub[i] * c[i - 1];
        assert!(pivot != 0.0, "singular tridiagonal system");
        c[i] = sup[i] / pivot;
        rhs[i] = (rhs[i] - sub[i] * rhs[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
}

/// Advance one implicit trapezoidal step of `ε v̇ = L(α + d v)`, `α̇ = v`,
/// applying `boundary_value_next` / `boundary_velocity_next` as the Dirichlet
/// data at `t + dt`. The caller supplies the boundary velocity analytically;
/// see [`step_backward_difference`] for the differenced fallback.
pub fn step(
    field: &WaveField,
    params: &KvParams,
    grid: &Grid,
    dt: f64,
    boundary_value_next: f64,
    boundary_velocity_next: f64,
) -> WaveField {
    assert!(dt > 0.0, "dt must be positive");
    field.assert_grid(grid);
    let n = grid.points;
    let m = n - 1;
    let d = params.damping;
    let inv_eps = 1.0 / params.stiffness_inverse;
    let lap = discrete_laplacian(grid);
    let alpha = &field.displacement;
    let vel = &field.velocity;

    // acceleration at the current time level: a = L(α + d v)/ε
    let q: Vec<f64> = (0..n).map(|i| alpha[i] + d * vel[i]).collect();
    let acc = lap.apply(&q);

    // r carries the known part of α + d v at t + dt: the trapezoidal update
    // of α on interior nodes and the prescribed data at the Dirichlet node.
    let mut r: Vec<f64> = (0..m).map(|i| alpha[i] + 0.5 * dt * vel[i]).collect();
    r.push(boundary_value_next + d * boundary_velocity_next);
    let pr = lap.apply(&r);

    let mut rhs: Vec<f64> = (0..m)
        .map(|i| vel[i] + 0.5 * dt * inv_eps * (acc[i] + pr[i]))
        .collect();

    // (I − η L) v⁺ = rhs with η = (dt/2)(dt/2 + d)/ε
    let eta = 0.5 * dt * (0.5 * dt + d) * inv_eps;
    let s = eta / (grid.dx * grid.dx);
    let sub = vec![-s; m];
    let diag = vec![1.0 + 2.0 * s; m];
    let mut sup = vec![-s; m];
    sup[0] = -2.0 * s;
    solve_tridiag(&sub, &diag, &sup, &mut rhs);
    let mut new_vel = rhs;

    let mut new_disp: Vec<f64> = (0..m)
        .map(|i| alpha[i] + 0.5 * dt * (vel[i] + new_vel[i]))
        .collect();
    new_disp.push(boundary_value_next);
    new_vel.push(boundary_velocity_next);

    WaveField {
        displacement: new_disp,
        velocity: new_vel,
        time: field.time + dt,
    }
}

/// Fallback for callers without an analytic boundary velocity: difference
/// the prescribed boundary values (first-order accurate at the boundary).
pub fn step_backward_difference(
    field: &WaveField,
    params: &KvParams,
    grid: &Grid,
    dt: f64,
    boundary_value_next: f64,
) -> WaveField {
    let bvel = (boundary_value_next - field.displacement[grid.points - 1]) / dt;
    step(field, params, grid, dt, boundary_value_next, bvel)
}

/// Max-norm residual of `ε α_tt − α_xx − d α_xxt` over strictly interior
/// nodes, from three equally spaced snapshots and centered differences.
pub fn pde_residual(history: &[WaveField; 3], grid: &Grid, params: &KvParams, dt: f64) -> f64 {
    assert!(dt > 0.0);
    for f in history {
        f.assert_grid(grid);
    }
    let n = grid.points;
    let inv_dx2 = 1.0 / (grid.dx * grid.dx);
    let xx = |f: &WaveField, i: usize| {
        (f.displacement[i - 1] - 2.0 * f.displacement[i] + f.displacement[i + 1]) * inv_dx2
    };
    let [f0, f1, f2] = history;
    let mut worst: f64 = 0.0;
    for i in 1..n - 1 {
        let att = (f2.displacement[i] - 2.0 * f1.displacement[i] + f0.displacement[i]) / (dt * dt);
        let axx = xx(f1, i);
        let axxt = (xx(f2, i) - xx(f0, i)) / (2.0 * dt);
        worst = worst.max(
            (params.stiffness_inverse * att - axx - params.damping * axxt).abs(),
        );
    }
    worst
}

/// Discrete energy `½(ε‖v‖² + ‖α_x‖²)`: trapezoidal node quadrature for the
/// velocity, edge-midpoint sum for the gradient. For zero Dirichlet data this
/// quantity is non-increasing under [`step`] in exact arithmetic.
pub fn energy(field: &WaveField, grid: &Grid, params: &KvParams) -> f64 {
    field.assert_grid(grid);
    let v2 = trapezoid_sq(&field.velocity, grid.dx);
    let mut grad2 = 0.0;
    for i in 0..grid.points - 1 {
        let g = (field.displacement[i + 1] - field.displacement[i]) / grid.dx;
        grad2 += g * g * grid.dx;
    }
    0.5 * (params.stiffness_inverse * v2 + grad2)
}

/// Max-norm tracking error of the solver against the exact probe trajectory
/// β over `[0, t_end]` when initialized and boundary-driven by it. Halving
/// `dx` and `dt` together should shrink the result by ≈4.
pub fn manufactured_tracking_error(
    probe: &crate::probe::ProbeParams,
    kv: &KvParams,
    points: usize,
    dt: f64,
    t_end: f64,
) -> f64 {
    let grid = Grid::new(probe.domain_length, points).expect("valid refinement grid");
    let mut field = WaveField::from_profiles(
        &grid,
        |x| probe.beta_r(x, 0.0),
        |x| probe.beta_r_t(x, 0.0),
        0.0,
    );
    let steps = (t_end / dt).round() as usize;
    let mut worst: f64 = 0.0;
    for k in 1..=steps {
        let t = k as f64 * dt;
        field = step(
            &field,
            kv,
            &grid,
            dt,
            probe.beta_r(grid.domain_length, t),
            probe.beta_r_t(grid.domain_length, t),
        );
        for i in 0..grid.points {
            worst = worst.max((field.displacement[i] - probe.beta_r(grid.x(i), t)).abs());
        }
    }
    worst
}

/// Trapezoidal quadrature of `values` on a uniform grid with spacing `dx`.
pub(crate) fn trapezoid(values: &[f64], dx: f64) -> f64 {
    let n = values.len();
    debug_assert!(n >= 2);
    let mut s = 0.5 * (values[0] + values[n - 1]);
    for v in &values[1..n - 1] {
        s += v;
    }
    s * dx
}

/// Trapezoidal quadrature of the squared samples.
pub(crate) fn trapezoid_sq(values: &[f64], dx: f64) -> f64 {
    let n = values.len();
    debug_assert!(n >= 2);
    let mut s = 0.5 * (values[0] * values[0] + values[n - 1] * values[n - 1]);
    for v in &values[1..n - 1] {
        s += v * v;
    }
    s * dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::ProbeParams;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn grid101() -> Grid {
        Grid::new(1.0, 101).unwrap()
    }

    #[test]
    fn grid_spacing_consistency() {
        for &(d, n) in &[(1.0, 101usize), (2.5, 33), (0.7, 1001)] {
            let g = Grid::new(d, n).unwrap();
            assert!((g.dx * (g.points - 1) as f64 - g.domain_length).abs() <= 1e-12 * d);
            assert_eq!(g.x(n - 1), d);
            assert_eq!(g.x(0), 0.0);
        }
        assert!(Grid::new(0.0, 101).is_err());
        assert!(Grid::new(1.0, 2).is_err());
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        let g = grid101();
        let lap = discrete_laplacian(&g);
        let vals = vec![3.7; g.points];
        for r in lap.apply(&vals) {
            assert_eq!(r, 0.0);
        }
    }

    #[test]
    fn laplacian_exact_for_quadratic() {
        let g = grid101();
        let lap = discrete_laplacian(&g);
        let vals: Vec<f64> = (0..g.points).map(|i| g.x(i) * g.x(i)).collect();
        for r in lap.apply(&vals) {
            assert!((r - 2.0).abs() <= 1e-10, "r = {r}");
        }
    }

    #[test]
    fn laplacian_ghost_node_second_order() {
        // α = cos(πx/2): α_xx(0) = −(π/2)², ghost closure error O(dx²)
        let g = grid101();
        let lap = discrete_laplacian(&g);
        let vals: Vec<f64> = (0..g.points).map(|i| (PI * g.x(i) / 2.0).cos()).collect();
        let r0 = lap.apply(&vals)[0];
        let exact = -(PI / 2.0) * (PI / 2.0);
        assert!((r0 - exact).abs() <= 1e-4, "r0 = {r0}, exact = {exact}");
    }

    #[test]
    fn laplacian_coefficients_shape() {
        let g = Grid::new(1.0, 5).unwrap();
        let c = discrete_laplacian(&g).coefficients();
        let s = 1.0 / (g.dx * g.dx);
        assert_eq!(c.diag, vec![-2.0 * s; 4]);
        assert_eq!(c.sup[0], 2.0 * s);
        assert_eq!(c.sup[1], s);
        assert_eq!(c.sub[1], s);
    }

    #[test]
    fn zero_field_is_equilibrium() {
        let g = grid101();
        let kv = KvParams::standard(0.1).unwrap();
        let mut f = WaveField::zero(&g);
        for _ in 0..500 {
            f = step(&f, &kv, &g, 1e-2, 0.0, 0.0);
        }
        assert!(f.displacement.iter().all(|&v| v == 0.0));
        assert!(f.velocity.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn boundary_value_applied_exactly() {
        let g = grid101();
        let kv = KvParams::standard(0.1).unwrap();
        let f = WaveField::zero(&g);
        let f2 = step(&f, &kv, &g, 1e-3, 0.42, 1.3);
        assert_eq!(f2.displacement[g.points - 1], 0.42);
        assert_eq!(f2.velocity[g.points - 1], 1.3);
        assert_eq!(f2.time, 1e-3);
    }

    #[test]
    fn tracks_exact_trajectory_second_order() {
        let probe = ProbeParams::new(0.2, 8.0, 0.1, 1.0).unwrap();
        let kv = KvParams::standard(0.1).unwrap();
        let coarse = manufactured_tracking_error(&probe, &kv, 51, 2e-3, 1.0);
        let fine = manufactured_tracking_error(&probe, &kv, 101, 1e-3, 1.0);
        assert!(coarse < 0.05, "coarse error {coarse}");
        let ratio = coarse / fine;
        assert!((3.0..5.0).contains(&ratio), "ratio = {ratio}");
    }

    #[test]
    fn neumann_end_slope_second_order() {
        // one-sided second-order estimate of α_x(0) on a manufactured run
        let probe = ProbeParams::new(0.2, 8.0, 0.1, 1.0).unwrap();
        let grid = Grid::new(1.0, 101).unwrap();
        let kv = KvParams::standard(0.1).unwrap();
        let mut field =
            WaveField::from_profiles(&grid, |x| probe.beta_r(x, 0.0), |x| probe.beta_r_t(x, 0.0), 0.0);
        let dt = 1e-3;
        let mut worst: f64 = 0.0;
        for k in 1..=1000 {
            let t = k as f64 * dt;
            field = step(&field, &kv, &grid, dt, probe.dither(t), probe.dither_rate(t));
            let d = &field.displacement;
            let slope = (-3.0 * d[0] + 4.0 * d[1] - d[2]) / (2.0 * grid.dx);
            worst = worst.max(slope.abs());
        }
        assert!(worst <= 20.0 * grid.dx * grid.dx, "worst slope {worst}");
    }

    #[test]
    fn energy_decays_for_homogeneous_problem() {
        let g = grid101();
        let kv = KvParams::standard(0.1).unwrap();
        for &dt in &[1e-3, 1e-2, 1e-1] {
            let mut f = WaveField::from_profiles(
                &g,
                |x| (PI * x / 2.0).cos() + 0.3 * (3.0 * PI * x / 2.0).cos(),
                |x| 0.5 * (5.0 * PI * x / 2.0).cos(),
                0.0,
            );
            let mut e = energy(&f, &g, &kv);
            let e0 = e;
            for _ in 0..(0.5_f64 / dt).ceil() as usize {
                f = step(&f, &kv, &g, dt, 0.0, 0.0);
                let e_next = energy(&f, &g, &kv);
                assert!(
                    e_next <= e * (1.0 + 1e-12) + 1e-13,
                    "energy grew at dt = {dt}: {e} -> {e_next}"
                );
                e = e_next;
            }
            assert!(e < e0);
        }
    }

    #[test]
    fn residual_zero_for_zero_field() {
        let g = grid101();
        let kv = KvParams::standard(0.1).unwrap();
        let h = [
            WaveField::zero(&g),
            WaveField::zero(&g),
            WaveField::zero(&g),
        ];
        assert_eq!(pde_residual(&h, &g, &kv, 1e-3), 0.0);
    }

    fn beta_snapshots(probe: &ProbeParams, points: usize, t: f64, dt: f64) -> [WaveField; 3] {
        let g = Grid::new(probe.domain_length, points).unwrap();
        let snap = |tk: f64| {
            WaveField::from_profiles(&g, |x| probe.beta_r(x, tk), |x| probe.beta_r_t(x, tk), tk)
        };
        [snap(t - dt), snap(t), snap(t + dt)]
    }

    #[test]
    fn residual_of_exact_solution_refines_second_order() {
        let probe = ProbeParams::new(0.2, 8.0, 0.1, 1.0).unwrap();
        let kv = KvParams::standard(0.1).unwrap();
        let res = |points: usize, dt: f64| {
            let g = Grid::new(1.0, points).unwrap();
            pde_residual(&beta_snapshots(&probe, points, 0.73, dt), &g, &kv, dt)
        };
        let coarse = res(101, 1e-2);
        let fine = res(201, 5e-3);
        assert!(coarse > 0.0);
        let ratio = coarse / fine;
        assert!((3.0..5.0).contains(&ratio), "ratio = {ratio}");
    }

    #[test]
    fn residual_detects_non_solution() {
        // α = x² t: residual is |−2t − 2d| = 2.2 at t = 1, d = 0.1, exactly
        // reproduced by the centered differences (polynomial field).
        let g = grid101();
        let kv = KvParams::standard(0.1).unwrap();
        let dt = 1e-2;
        let snap = |t: f64| WaveField::from_profiles(&g, |x| x * x * t, |x| x * x, t);
        let h = [snap(1.0 - dt), snap(1.0), snap(1.0 + dt)];
        let r = pde_residual(&h, &g, &kv, dt);
        assert!((r - 2.2).abs() <= 1e-9, "r = {r}");
    }

    #[test]
    fn backward_difference_step_matches_exact_velocity_to_first_order() {
        let probe = ProbeParams::new(0.2, 8.0, 0.1, 1.0).unwrap();
        let g = grid101();
        let kv = KvParams::standard(0.1).unwrap();
        let dt = 1e-3;
        let mut fa =
            WaveField::from_profiles(&g, |x| probe.beta_r(x, 0.0), |x| probe.beta_r_t(x, 0.0), 0.0);
        let mut fb = fa.clone();
        for k in 1..=200 {
            let t = k as f64 * dt;
            fa = step(&fa, &kv, &g, dt, probe.dither(t), probe.dither_rate(t));
            fb = step_backward_difference(&fb, &kv, &g, dt, probe.dither(t));
        }
        let max_diff = fa
            .displacement
            .iter()
            .zip(&fb.displacement)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_diff > 0.0);
        assert!(max_diff < 5e-3, "diff = {max_diff}");
    }

    #[test]
    fn stiffness_inverse_slows_the_field() {
        // larger ε means more inertia: after the same boundary ramp the
        // stiffer (ε small) field has moved further toward equilibrium
        let g = grid101();
        let dt = 1e-3;
        let ramp = |t: f64| t.min(0.1);
        let run = |eps: f64| {
            let kv = KvParams::new(0.1, eps).unwrap();
            let mut f = WaveField::zero(&g);
            for k in 1..=300 {
                let t = k as f64 * dt;
                f = step_backward_difference(&f, &kv, &g, dt, ramp(t));
            }
            f.displacement[0]
        };
        assert!(run(1.0).abs() > run(4.0).abs());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn energy_never_increases_for_random_data(
            seed_disp in proptest::collection::vec(-1.0..1.0f64, 21),
            seed_vel in proptest::collection::vec(-1.0..1.0f64, 21),
            dt_pick in 0usize..3,
        ) {
            let g = Grid::new(1.0, 21).unwrap();
            let kv = KvParams::standard(0.1).unwrap();
            let dt = [1e-3, 1e-2, 1e-1][dt_pick];
            let mut disp = seed_disp;
            let mut vel = seed_vel;
            disp[20] = 0.0;
            vel[20] = 0.0;
            let mut f = WaveField::from_arrays(disp, vel, 0.0);
            let mut e = energy(&f, &g, &kv);
            for _ in 0..50 {
                f = step(&f, &kv, &g, dt, 0.0, 0.0);
                let e2 = energy(&f, &g, &kv);
                prop_assert!(e2 <= e * (1.0 + 1e-12) + 1e-13);
                e = e2;
            }
        }
    }
}
