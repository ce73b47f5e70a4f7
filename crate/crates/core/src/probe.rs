//! Probe-trajectory generation.
//!
//! The dither is not injected directly at the sensor: it is the boundary
//! trace `S(t) = β(D,t)` of a field `β` that solves the same damped wave
//! equation as the plant with `β(0,t) = a sin(ωt)` and `β_x(0,t) = 0`. The
//! closed form
//!
//! ```text
//! β(x,t) = (a/2) [ e^{β̂x} sin(ωt + β̄x) + e^{-β̂x} sin(ωt − β̄x) ]
//! ```
//!
//! is exact, so driving the actuated end with `S(t)` makes the perturbation
//! arriving at the measured end exactly `a sin(ωt)` once transients die out.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ProbeError {
    #[error("dither amplitude must be positive, got {0}")]
    Amplitude(f64),
    #[error("dither frequency must be positive, got {0}")]
    Frequency(f64),
    #[error("damping must be nonnegative, got {0}")]
    Damping(f64),
    #[error("domain length must be positive, got {0}")]
    Domain(f64),
}

/// Dither parameters: amplitude `a`, frequency `ω` (rad/s), Kelvin-Voigt
/// coefficient `d` of the actuation channel, and domain length `D`.
///
/// `d = 0` is admitted here (useful for undamped reductions) even though the
/// plant itself requires `d > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeParams {
    pub amplitude: f64,
    pub frequency: f64,
    pub damping: f64,
    pub domain_length: f64,
}

/// Dispersion factor `β̄(ω) = ω sqrt( (sqrt(1+ω²d²)+1) / (2(1+ω²d²)) )`.
pub fn beta_bar(omega: f64, d: f64) -> f64 {
    debug_assert!(omega > 0.0 && d >= 0.0);
    let r2 = 1.0 + omega * omega * d * d;
    omega * ((r2.sqrt() + 1.0) / (2.0 * r2)).sqrt()
}

/// Growth factor `β̂(ω) = ω sqrt( (sqrt(1+ω²d²)−1) / (2(1+ω²d²)) )`.
pub fn beta_hat(omega: f64, d: f64) -> f64 {
    debug_assert!(omega > 0.0 && d >= 0.0);
    let r2 = 1.0 + omega * omega * d * d;
    omega * ((r2.sqrt() - 1.0) / (2.0 * r2)).sqrt()
}

impl ProbeParams {
    pub fn new(
        amplitude: f64,
        frequency: f64,
        damping: f64,
        domain_length: f64,
    ) -> Result<Self, ProbeError> {
        if !(amplitude > 0.0) {
            return Err(ProbeError::Amplitude(amplitude));
        }
        if !(frequency > 0.0) {
            return Err(ProbeError::Frequency(frequency));
        }
        if !(damping >= 0.0) {
            return Err(ProbeError::Damping(damping));
        }
        if !(domain_length > 0.0) {
            return Err(ProbeError::Domain(domain_length));
        }
        Ok(Self {
            amplitude,
            frequency,
            damping,
            domain_length,
        })
    }

    pub fn beta_bar(&self) -> f64 {
        beta_bar(self.frequency, self.damping)
    }

    pub fn beta_hat(&self) -> f64 {
        beta_hat(self.frequency, self.damping)
    }

    /// Reference trajectory `β(x,t)`; exact solution of the damped wave
    /// equation with `β(0,t) = a sin(ωt)`, `β_x(0,t) = 0`.
    pub fn beta_r(&self, x: f64, t: f64) -> f64 {
        assert!(
            (0.0..=self.domain_length).contains(&x),
            "x = {x} outside [0, {}]",
            self.domain_length
        );
        let (bb, bh) = (self.beta_bar(), self.beta_hat());
        let w = self.frequency * t;
        0.5 * self.amplitude
            * ((bh * x).exp() * (w + bb * x).sin() + (-bh * x).exp() * (w - bb * x).sin())
    }

    /// Exact time derivative `∂_t β(x,t)`; the control law consumes
    /// `u = ∂_t(α − β)`, so this is evaluated on the solver grid every step.
    pub fn beta_r_t(&self, x: f64, t: f64) -> f64 {
        assert!(
            (0.0..=self.domain_length).contains(&x),
            "x = {x} outside [0, {}]",
            self.domain_length
        );
        let (bb, bh) = (self.beta_bar(), self.beta_hat());
        let w = self.frequency * t;
        0.5 * self.amplitude
            * self.frequency
            * ((bh * x).exp() * (w + bb * x).cos() + (-bh * x).exp() * (w - bb * x).cos())
    }

    /// Dither applied at the actuated boundary: `S(t) = β(D,t)`.
    pub fn dither(&self, t: f64) -> f64 {
        self.beta_r(self.domain_length, t)
    }

    /// Factored spatial profiles `cosh(β̂x)cos(β̄x)` and `sinh(β̂x)sin(β̄x)`
    /// at one point; `β = a(sin ωt · C + cos ωt · S)`.
    fn profiles(&self, x: f64) -> (f64, f64) {
        let (bb, bh) = (self.beta_bar(), self.beta_hat());
        (
            (bh * x).cosh() * (bb * x).cos(),
            (bh * x).sinh() * (bb * x).sin(),
        )
    }

    /// `Ṡ(t) = ∂_t β(D,t)`, supplied to the solver as the analytic boundary
    /// velocity.
    pub fn dither_rate(&self, t: f64) -> f64 {
        self.beta_r_t(self.domain_length, t)
    }
}

/// Probe trajectory sampled at fixed spatial stations, in the factored form
/// `β(x,t) = a[sin(ωt)·cosh(β̂x)cos(β̄x) + cos(ωt)·sinh(β̂x)sin(β̄x)]`: the
/// closed loop evaluates β_t on every grid node every step, and the factored
/// form needs one sin/cos pair per step instead of per node.
#[derive(Debug, Clone)]
pub struct ProbeTable {
    cosh_cos: Vec<f64>,
    sinh_sin: Vec<f64>,
    amplitude: f64,
    frequency: f64,
}

impl ProbeTable {
    pub fn new(params: &ProbeParams, stations: impl IntoIterator<Item = f64>) -> Self {
        let (mut cosh_cos, mut sinh_sin) = (Vec::new(), Vec::new());
        for x in stations {
            let (c, s) = params.profiles(x);
            cosh_cos.push(c);
            sinh_sin.push(s);
        }
        Self {
            cosh_cos,
            sinh_sin,
            amplitude: params.amplitude,
            frequency: params.frequency,
        }
    }

    pub fn len(&self) -> usize {
        self.cosh_cos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cosh_cos.is_empty()
    }

    /// β at station `i`.
    pub fn beta_r(&self, i: usize, t: f64) -> f64 {
        let (sin_wt, cos_wt) = (self.frequency * t).sin_cos();
        self.amplitude * (sin_wt * self.cosh_cos[i] + cos_wt * self.sinh_sin[i])
    }

    /// β_t at station `i`.
    pub fn beta_r_t(&self, i: usize, t: f64) -> f64 {
        let (sin_wt, cos_wt) = (self.frequency * t).sin_cos();
        self.amplitude * self.frequency * (cos_wt * self.cosh_cos[i] - sin_wt * self.sinh_sin[i])
    }

    /// `out[i] = f(i, β_t(x_i, t))` over all stations with one sin/cos pair.
    pub fn beta_r_t_map(&self, t: f64, mut f: impl FnMut(usize, f64)) {
        let (sin_wt, cos_wt) = (self.frequency * t).sin_cos();
        let aw = self.amplitude * self.frequency;
        for i in 0..self.cosh_cos.len() {
            f(i, aw * (cos_wt * self.cosh_cos[i] - sin_wt * self.sinh_sin[i]));
        }
    }
}
