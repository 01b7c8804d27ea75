//! Cartesian admittance control.
//!
//! The closed loop is asked to behave like `Λ ë + D ė + K e = -F_ext` with
//! `e = x_d - x`, where `F_ext` is the force the environment applies to the
//! robot. Solving for the commanded acceleration gives
//!
//! ```text
//! ẍ_cmd = ẍ_d + Λ⁻¹ (D ė + K e + F_ext)
//! ```
//!
//! so a constant push settles at `x - x_d = K⁻¹ F_ext`: the robot yields in
//! the direction it is pushed. All gain matrices are diagonal.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reference::ReferenceSample;
use crate::Vector;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("invalid gains: {0}")]
    InvalidGains(String),
    #[error("invalid time step {0} (need 0 < dt <= 0.01 s)")]
    InvalidTimeStep(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("stiffness entry {axis} is zero; steady-state lag is unbounded")]
    ZeroStiffness { axis: usize },
}

/// Diagonal desired inertia (kg), damping (N s/m) and stiffness (N/m).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GainsSpec", into = "GainsSpec")]
pub struct Gains {
    lambda: Vector,
    damping: Vector,
    stiffness: Vector,
}

/// Serialised form of [`Gains`]; validated on conversion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GainsSpec {
    pub lambda: Vec<f64>,
    pub damping: Vec<f64>,
    pub stiffness: Vec<f64>,
}

impl TryFrom<GainsSpec> for Gains {
    type Error = ControlError;

    fn try_from(spec: GainsSpec) -> Result<Self, Self::Error> {
        Gains::new(
            Vector::from_vec(spec.lambda),
            Vector::from_vec(spec.damping),
            Vector::from_vec(spec.stiffness),
        )
    }
}

impl From<Gains> for GainsSpec {
    fn from(g: Gains) -> Self {
        GainsSpec {
            lambda: g.lambda.iter().copied().collect(),
            damping: g.damping.iter().copied().collect(),
            stiffness: g.stiffness.iter().copied().collect(),
        }
    }
}

impl Gains {
    pub const DEFAULT_LAMBDA: f64 = 2.0;
    pub const DEFAULT_STIFFNESS: f64 = 400.0;

    pub fn new(lambda: Vector, damping: Vector, stiffness: Vector) -> Result<Self, ControlError> {
        let d = lambda.len();
        if d == 0 || damping.len() != d || stiffness.len() != d {
            return Err(ControlError::InvalidGains(format!(
                "inertia, damping and stiffness must share a non-zero dimension ({}, {}, {})",
                d,
                damping.len(),
                stiffness.len()
            )));
        }
        if lambda.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(ControlError::InvalidGains(
                "inertia entries must be positive and finite".into(),
            ));
        }
        if damping
            .iter()
            .chain(stiffness.iter())
            .any(|&g| !(g >= 0.0) || !g.is_finite())
        {
            return Err(ControlError::InvalidGains(
                "damping and stiffness entries must be non-negative and finite".into(),
            ));
        }
        Ok(Self {
            lambda,
            damping,
            stiffness,
        })
    }

    /// Same gains on every axis.
    pub fn isotropic(dims: usize, lambda: f64, damping: f64, stiffness: f64) -> Result<Self, ControlError> {
        Self::new(
            Vector::from_element(dims, lambda),
            Vector::from_element(dims, damping),
            Vector::from_element(dims, stiffness),
        )
    }

    /// `D = 2 sqrt(K Λ)` on every axis.
    pub fn critically_damped(dims: usize, lambda: f64, stiffness: f64) -> Result<Self, ControlError> {
        Self::isotropic(dims, lambda, 2.0 * (stiffness * lambda).sqrt(), stiffness)
    }

    /// Λ = 2 kg, K = 400 N/m, critical damping.
    pub fn default_for(dims: usize) -> Self {
        Self::critically_damped(dims, Self::DEFAULT_LAMBDA, Self::DEFAULT_STIFFNESS)
            .expect("default gains are valid")
    }

    pub fn dims(&self) -> usize {
        self.lambda.len()
    }

    pub fn lambda(&self) -> &Vector {
        &self.lambda
    }

    pub fn damping(&self) -> &Vector {
        &self.damping
    }

    pub fn stiffness(&self) -> &Vector {
        &self.stiffness
    }

    /// Copy with every stiffness entry replaced and damping kept critical.
    pub fn with_critical_stiffness(&self, stiffness: f64) -> Result<Self, ControlError> {
        let damping = self.lambda.map(|l| 2.0 * (stiffness * l).sqrt());
        Self::new(
            self.lambda.clone(),
            damping,
            Vector::from_element(self.dims(), stiffness),
        )
    }
}

/// Integrated commanded motion.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub position: Vector,
    pub velocity: Vector,
}

impl ControllerState {
    pub fn at_rest(position: Vector) -> Self {
        let d = position.len();
        Self {
            position,
            velocity: Vector::zeros(d),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(self.velocity.iter()).all(|x| x.is_finite())
    }
}

/// `e = x_d - x`, `ė = ẋ_d - ẋ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingError {
    pub e: Vector,
    pub e_dot: Vector,
}

pub fn tracking_error(state: &ControllerState, reference: &ReferenceSample) -> TrackingError {
    TrackingError {
        e: &reference.position - &state.position,
        e_dot: &reference.velocity - &state.velocity,
    }
}

/// `ẍ_cmd = ẍ_d + Λ⁻¹ (D ė + K e + F_ext)`.
pub fn admittance_accel(
    state: &ControllerState,
    reference: &ReferenceSample,
    f_ext: &Vector,
    gains: &Gains,
) -> Vector {
    let d = gains.dims();
    let mut out = Vector::zeros(d);
    for i in 0..d {
        let e = reference.position[i] - state.position[i];
        let e_dot = reference.velocity[i] - state.velocity[i];
        let wrench = gains.damping[i] * e_dot + gains.stiffness[i] * e + f_ext[i];
        out[i] = reference.acceleration[i] + wrench / gains.lambda[i];
    }
    out
}

fn check_step(state: &ControllerState, gains: &Gains, dt: f64) -> Result<(), ControlError> {
    if !(dt > 0.0 && dt <= 0.01) {
        return Err(ControlError::InvalidTimeStep(dt));
    }
    if state.position.len() != gains.dims() {
        return Err(ControlError::Dimension {
            expected: gains.dims(),
            got: state.position.len(),
        });
    }
    Ok(())
}

/// Semi-implicit Euler: `v' = v + ẍ_cmd dt`, `x' = x + v' dt`.
pub fn step(
    state: &ControllerState,
    reference: &ReferenceSample,
    f_ext: &Vector,
    gains: &Gains,
    dt: f64,
) -> Result<ControllerState, ControlError> {
    check_step(state, gains, dt)?;
    let accel = admittance_accel(state, reference, f_ext, gains);
    Ok(advance(state, &accel, dt))
}

/// The semi-implicit update for an already computed acceleration.
pub fn advance(state: &ControllerState, accel: &Vector, dt: f64) -> ControllerState {
    let velocity = &state.velocity + accel * dt;
    let position = &state.position + &velocity * dt;
    ControllerState { position, velocity }
}

/// Classical fourth-order Runge–Kutta step with the reference held over the
/// interval and the external force re-evaluated at each stage.
pub fn step_rk4<F>(
    state: &ControllerState,
    reference: &ReferenceSample,
    gains: &Gains,
    dt: f64,
    force: F,
) -> Result<ControllerState, ControlError>
where
    F: Fn(&ControllerState) -> Vector,
{
    check_step(state, gains, dt)?;
    let deriv = |s: &ControllerState| {
        let f = force(s);
        (s.velocity.clone(), admittance_accel(s, reference, &f, gains))
    };
    let offset = |s: &ControllerState, dx: &Vector, dv: &Vector, h: f64| ControllerState {
        position: &s.position + dx * h,
        velocity: &s.velocity + dv * h,
    };
    let (k1x, k1v) = deriv(state);
    let (k2x, k2v) = deriv(&offset(state, &k1x, &k1v, dt / 2.0));
    let (k3x, k3v) = deriv(&offset(state, &k2x, &k2v, dt / 2.0));
    let (k4x, k4v) = deriv(&offset(state, &k3x, &k3v, dt));
    Ok(ControllerState {
        position: &state.position + (k1x + &k2x * 2.0 + &k3x * 2.0 + k4x) * (dt / 6.0),
        velocity: &state.velocity + (k1v + &k2v * 2.0 + &k3v * 2.0 + k4v) * (dt / 6.0),
    })
}

/// Integration scheme for the commanded motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    #[default]
    SemiImplicitEuler,
    Rk4,
}

/// Tracking error while following a constant-velocity reference at steady
/// state: `K⁻¹ D v` without velocity feedforward, zero with it.
pub fn steady_state_lag(
    gains: &Gains,
    v_ref: &Vector,
    velocity_ff: bool,
) -> Result<Vector, ControlError> {
    if v_ref.len() != gains.dims() {
        return Err(ControlError::Dimension {
            expected: gains.dims(),
            got: v_ref.len(),
        });
    }
    if let Some(axis) = gains.stiffness.iter().position(|&k| k == 0.0) {
        return Err(ControlError::ZeroStiffness { axis });
    }
    if velocity_ff {
        return Ok(Vector::zeros(gains.dims()));
    }
    Ok(v_ref.component_mul(&gains.damping).component_div(&gains.stiffness))
}
