//! Dither demodulation, the low-pass-filtered boundary control law, and the
//! estimate integrator.
//!
//! Per update the controller demodulates the measured output into gradient
//! and Hessian estimates,
//!
//! ```text
//! G(t) = (2/a) sin(ωt) y(t),    Ĥ(t) = −(8/a²) cos(2ωt) y(t),
//! ```
//!
//! forms the raw compensated law `K [G − Ĥ ∫₀ᴰ cD·I₁(z)/z · u(σ,t) dσ]`,
//! passes it through the first-order low-pass `c̄/(s + c̄)`, and integrates
//! the filtered output into the estimate `θ̂`.
//!
//! The measurement is washed out (first-order high-pass `s/(s + h)`) before
//! demodulation. The gradient information rides on the dither frequency, so
//! the washout passes it untouched, but it strips the large quasi-constant
//! offset `y* + (H/2)ϑ²`: demodulating that offset directly produces a
//! dither-frequency ripple of amplitude `2Ky*·c̄/(aω)`-scale which re-enters
//! the loop through the wave channel and, at bench gains, lands with enough
//! phase lag to flip the effective gradient sign and destabilize the loop.
//! Setting the washout cutoff to zero disables the stage and recovers the
//! bare demodulation law.

use crate::kernel::{control_integral, KernelParams};
use crate::probe::ProbeParams;
use crate::solver::{Grid, WaveField};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ControllerError {
    #[error("adaptation gain must be positive, got {0}")]
    Gain(f64),
    #[error("filter cutoff must be positive, got {0}")]
    FilterCutoff(f64),
    #[error("kernel parameter c must be positive, got {0}")]
    KernelC(f64),
    #[error("washout cutoff must be nonnegative, got {0}")]
    WashoutCutoff(f64),
}

/// Adaptation gain `K`, backstepping parameter `c`, low-pass cutoff `c̄`
/// (rad/s), measurement washout cutoff `h` (rad/s, 0 disables), and the
/// dither the demodulators are matched to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerParams {
    pub gain: f64,
    pub c: f64,
    pub filter_cutoff: f64,
    pub washout_cutoff: f64,
    pub probe: ProbeParams,
}

impl ControllerParams {
    pub fn new(
        gain: f64,
        c: f64,
        filter_cutoff: f64,
        washout_cutoff: f64,
        probe: ProbeParams,
    ) -> Result<Self, ControllerError> {
        if !(gain > 0.0) {
            return Err(ControllerError::Gain(gain));
        }
        if !(filter_cutoff > 0.0) {
            return Err(ControllerError::FilterCutoff(filter_cutoff));
        }
        if !(c > 0.0) {
            return Err(ControllerError::KernelC(c));
        }
        if !(washout_cutoff >= 0.0) {
            return Err(ControllerError::WashoutCutoff(washout_cutoff));
        }
        Ok(Self {
            gain,
            c,
            filter_cutoff,
            washout_cutoff,
            probe,
        })
    }
}

/// Mutable controller state: the estimate `θ̂`, the internal low-pass state,
/// the washout tracker (primed with the first measurement), the latest
/// demodulated values and the controller clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub theta_hat: f64,
    pub filter_state: f64,
    pub washout_state: Option<f64>,
    pub last_gradient: f64,
    pub last_hessian: f64,
    pub time: f64,
}

impl ControllerState {
    pub fn new(theta_hat_0: f64) -> Self {
        Self {
            theta_hat: theta_hat_0,
            filter_state: 0.0,
            washout_state: None,
            last_gradient: 0.0,
            last_hessian: 0.0,
            time: 0.0,
        }
    }
}

/// Gradient estimate `G(t) = (2/a) sin(ωt) y`.
pub fn demod_gradient(y: f64, t: f64, a: f64, omega: f64) -> f64 {
    assert!(a > 0.0, "demodulation needs a positive dither amplitude");
    2.0 / a * (omega * t).sin() * y
}

/// Hessian estimate `Ĥ(t) = −(8/a²) cos(2ωt) y`.
pub fn demod_hessian(y: f64, t: f64, a: f64, omega: f64) -> f64 {
    assert!(a > 0.0, "demodulation needs a positive dither amplitude");
    -8.0 / (a * a) * (2.0 * omega * t).cos() * y
}

/// One implicit-Euler step of the low-pass `ẋ = c̄ (raw − x)`; A-stable and
/// a strict contraction toward the input.
pub(crate) fn lowpass_step(state: f64, raw: f64, cutoff: f64, dt: f64) -> f64 {
    (state + dt * cutoff * raw) / (1.0 + dt * cutoff)
}

/// One controller update at the state's clock `t`: wash out and demodulate
/// `y`, form the compensated raw law from the distributed state `u(σ,t)`
/// (displacement slots of `u_field`), advance the low-pass, integrate
/// `θ̂ ← θ̂ + U dt`. Returns the new state and the control `U` to apply over
/// `[t, t+dt]`.
pub fn control_update(
    state: &ControllerState,
    params: &ControllerParams,
    kernel: &KernelParams,
    y: f64,
    u_field: &WaveField,
    grid: &Grid,
    dt: f64,
) -> (ControllerState, f64) {
    control_update_with_integral(state, params, y, control_integral(kernel, u_field, grid), dt)
}

/// Same update with the gain-weighted integral `∫₀ᴰ gain_weight(σ)u dσ`
/// already evaluated (the closed-loop driver caches the weights).
pub fn control_update_with_integral(
    state: &ControllerState,
    params: &ControllerParams,
    y: f64,
    integral: f64,
    dt: f64,
) -> (ControllerState, f64) {
    assert!(dt > 0.0, "dt must be positive");
    let a = params.probe.amplitude;
    let omega = params.probe.frequency;
    let (washout_state, y_demod) = if params.washout_cutoff > 0.0 {
        let tracker = state.washout_state.unwrap_or(y);
        let tracker = lowpass_step(tracker, y, params.washout_cutoff, dt);
        (Some(tracker), y - tracker)
    } else {
        (state.washout_state, y)
    };
    let g = demod_gradient(y_demod, state.time, a, omega);
    let h = demod_hessian(y_demod, state.time, a, omega);
    let raw = params.gain * (g - h * integral);
    let filter_state = lowpass_step(state.filter_state, raw, params.filter_cutoff, dt);
    let control = filter_state;
    let next = ControllerState {
        theta_hat: state.theta_hat + control * dt,
        filter_state,
        washout_state,
        last_gradient: g,
        last_hessian: h,
        time: state.time + dt,
    };
    (next, control)
}

/// Average-mode reference law `U_av = K̄ϑ − K̄ ∫₀ᴰ gain_weight(σ) u_av dσ`
/// with `K̄ = K·H`. Validation-only: it consumes the true Hessian (and,
/// through ϑ, the true optimizer), which the seeking controller never sees.
pub fn average_mode_update(
    vartheta: f64,
    u_av_field: &WaveField,
    h_true: f64,
    params: &ControllerParams,
    kernel: &KernelParams,
    grid: &Grid,
) -> f64 {
    assert!(h_true < 0.0, "average law needs a concave map, H = {h_true}");
    let k_bar = params.gain * h_true;
    k_bar * vartheta - k_bar * control_integral(kernel, u_av_field, grid)
}
