//! The unknown static performance map.
//!
//! The controller never reads the fields of [`QuadraticMap`]; only the
//! simulation loop evaluates it to produce the measured output `y(t)`. That
//! separation is what makes the map "unknown" to the seeking algorithm.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("hessian must be strictly negative (maximization problem), got {0}")]
    NonConcave(f64),
}

/// Concave quadratic map `Q(θ) = y* + (H/2)(θ − Θ*)²` with `H < 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticMap {
    /// Optimizer Θ*.
    pub theta_star: f64,
    /// Optimal value y* = Q(Θ*).
    pub y_star: f64,
    /// Hessian H, strictly negative.
    pub hessian: f64,
}

impl QuadraticMap {
    pub fn new(theta_star: f64, y_star: f64, hessian: f64) -> Result<Self, MapError> {
        if !(hessian < 0.0) {
            return Err(MapError::NonConcave(hessian));
        }
        Ok(Self {
            theta_star,
            y_star,
            hessian,
        })
    }

    /// Measured output `y = y* + (H/2)(θ − Θ*)²`.
    pub fn evaluate(&self, theta: f64) -> f64 {
        let e = theta - self.theta_star;
        self.y_star + 0.5 * self.hessian * e * e
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bench() -> QuadraticMap {
        QuadraticMap::new(8.0, 64.0, -1.0).unwrap()
    }

    #[test]
    fn optimum_value_at_optimizer() {
        assert_eq!(bench().evaluate(8.0), 64.0);
    }

    #[test]
    fn vertex_for_any_valid_map() {
        let m = QuadraticMap::new(-3.5, 0.25, -7.0).unwrap();
        assert_eq!(m.evaluate(-3.5), 0.25);
    }

    #[test]
    fn hand_evaluated_point() {
        // 64 + (-1/2)(9-8)^2 = 63.5
        assert_eq!(bench().evaluate(9.0), 63.5);
    }

    #[test]
    fn rejects_flat_or_convex() {
        assert!(QuadraticMap::new(0.0, 0.0, 0.0).is_err());
        assert!(QuadraticMap::new(0.0, 0.0, 2.0).is_err());
        assert!(QuadraticMap::new(0.0, 0.0, f64::NAN).is_err());
    }

    #[test]
    fn quadratic_increment_identity() {
        let m = bench();
        for &delta in &[0.1, 1.0, 10.0] {
            let inc = m.evaluate(m.theta_star + delta) - m.y_star;
            let expect = 0.5 * m.hessian * delta * delta;
            // machine precision relative to the y* offset that round-trips
            assert!((inc - expect).abs() <= 1e-12, "delta = {delta}");
        }
    }

    proptest! {
        #[test]
        fn even_symmetry_and_upper_bound(
            theta_star in -50.0..50.0f64,
            y_star in -100.0..100.0f64,
            hessian in -20.0..-0.01f64,
            delta in -30.0..30.0f64,
        ) {
            let m = QuadraticMap::new(theta_star, y_star, hessian).unwrap();
            let up = m.evaluate(theta_star + delta);
            let down = m.evaluate(theta_star - delta);
            // the float arguments θ*±δ are not exact mirror images, so allow
            // a few ulps of asymmetry
            let scale = y_star.abs() + hessian.abs() * delta * delta + 1.0;
            prop_assert!((up - down).abs() <= 1e-12 * scale);
            prop_assert!(up <= y_star + 1e-12 * scale);
            if delta.abs() > 1e-3 {
                prop_assert!(up < y_star);
            }
        }
    }
}
