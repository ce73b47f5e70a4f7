//! Gradient extremum seeking for a scalar quadratic map actuated through a
//! wave PDE with Kelvin-Voigt damping.
//!
//! The toolkit covers the full closed loop: a finite-difference solver for
//! `α_tt = α_xx + d α_xxt` with a Neumann end at `x = 0` and Dirichlet
//! actuation at `x = D`, closed-form probe trajectories that shape the dither
//! through the PDE, the Bessel-kernel backstepping compensator, dither
//! demodulation with a low-pass-filtered control law, the analytic spectrum
//! of the damped wave operator, and Lyapunov/state-norm diagnostics for the
//! closed loop.
//!
//! Entry points:
//! - [`sim::Scenario`] / [`sim::run`] execute the closed loop and return the
//!   time series consumed by the CLI.
//! - Individual modules ([`solver`], [`probe`], [`kernel`], [`controller`],
//!   [`spectrum`]) are usable on their own.

// validation uses negated comparisons (`!(x > 0.0)`) so that NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod kernel;
pub mod map;
pub mod probe;
pub mod sim;
pub mod solver;
pub mod spectrum;

pub use controller::{ControllerParams, ControllerState};
pub use kernel::{KernelParams, KernelTable};
pub use map::QuadraticMap;
pub use probe::ProbeParams;
pub use sim::{run, Mode, Scenario, SimError, SimOutput};
pub use solver::{Grid, KvParams, WaveField};
pub use spectrum::EigenPair;
