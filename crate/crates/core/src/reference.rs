//! High-rate reference generation from low-rate actions.
//!
//! Three representations are supported, all producing a [`ReferenceSample`]
//! `(x_d, xd_dot, xd_ddot)` at an arbitrary query time:
//!
//! - zero-order hold of discrete targets, no feedforward;
//! - finite differences: linear interpolation between consecutive targets
//!   with the piecewise-constant difference quotient as velocity;
//! - spline: analytic position, velocity and acceleration of a B-spline.
//!
//! Tick boundaries are right-continuous: at `t = start + j dt` the hold
//! index is `j`. Query times within `1e-9` of a tick (relative to `dt`) are
//! treated as lying on it, so accumulated floating-point time does not shift
//! the staircase by a control period.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spline::{BSplineTrajectory, TrajectorySamples};
use crate::Vector;

const TICK_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReferenceError {
    #[error("query time {t} precedes chunk start {start}")]
    TimeBeforeChunk { t: f64, start: f64 },
    #[error("invalid chunk: {0}")]
    InvalidChunk(String),
    #[error("invalid cutoff {cutoff_hz} Hz (sampling rate {sample_rate_hz} Hz)")]
    InvalidCutoff { cutoff_hz: f64, sample_rate_hz: f64 },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
}

/// Reference position, velocity and acceleration at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSample {
    pub position: Vector,
    pub velocity: Vector,
    pub acceleration: Vector,
}

impl ReferenceSample {
    /// A stationary reference at `position`.
    pub fn hold(position: Vector) -> Self {
        let d = position.len();
        Self {
            position,
            velocity: Vector::zeros(d),
            acceleration: Vector::zeros(d),
        }
    }

    pub fn dims(&self) -> usize {
        self.position.len()
    }

    pub fn is_finite(&self) -> bool {
        self.position
            .iter()
            .chain(self.velocity.iter())
            .chain(self.acceleration.iter())
            .all(|x| x.is_finite())
    }
}

/// How discrete actions become a continuous reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ReferenceMode {
    /// Stepwise positions, velocity feedforward fixed at zero.
    #[serde(rename = "zoh")]
    PositionOnly,
    /// Linear interpolation with difference-quotient velocity.
    #[serde(rename = "fd")]
    FiniteDifference,
    /// Cubic B-spline sampled analytically.
    #[serde(rename = "spline")]
    Spline,
}

impl ReferenceMode {
    pub const ALL: [ReferenceMode; 3] = [
        ReferenceMode::PositionOnly,
        ReferenceMode::FiniteDifference,
        ReferenceMode::Spline,
    ];

    /// Whether the mode supplies a velocity feedforward term.
    pub fn has_velocity(self) -> bool {
        !matches!(self, ReferenceMode::PositionOnly)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ReferenceMode::PositionOnly => "zoh",
            ReferenceMode::FiniteDifference => "fd",
            ReferenceMode::Spline => "spline",
        }
    }
}

impl std::fmt::Display for ReferenceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ReferenceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "zoh" | "position" | "position-only" => Ok(ReferenceMode::PositionOnly),
            "fd" | "finite-difference" => Ok(ReferenceMode::FiniteDifference),
            "spline" | "bspline" => Ok(ReferenceMode::Spline),
            other => Err(format!("unknown reference mode '{other}' (zoh|fd|spline)")),
        }
    }
}

/// Discrete targets predicted at `1 / dt_action`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionChunk {
    start_time: f64,
    dt_action: f64,
    targets: Vec<Vector>,
    velocities: Option<Vec<Vector>>,
}

impl ActionChunk {
    pub fn new(start_time: f64, dt_action: f64, targets: Vec<Vector>) -> Result<Self, ReferenceError> {
        if targets.is_empty() {
            return Err(ReferenceError::InvalidChunk("no targets".into()));
        }
        if !(dt_action > 0.0) || !dt_action.is_finite() {
            return Err(ReferenceError::InvalidChunk(format!(
                "dt_action must be positive, got {dt_action}"
            )));
        }
        let d = targets[0].len();
        if d == 0 || targets.iter().any(|x| x.len() != d) {
            return Err(ReferenceError::InvalidChunk("targets differ in dimension".into()));
        }
        Ok(Self {
            start_time,
            dt_action,
            targets,
            velocities: None,
        })
    }

    /// Attaches externally estimated target velocities (e.g. filtered
    /// teleoperation velocities), used by [`fd_reference`] in place of the
    /// difference quotient.
    pub fn with_velocities(mut self, velocities: Vec<Vector>) -> Result<Self, ReferenceError> {
        let d = self.dims();
        if velocities.len() != self.targets.len() || velocities.iter().any(|v| v.len() != d) {
            return Err(ReferenceError::InvalidChunk(
                "velocities must match targets in length and dimension".into(),
            ));
        }
        self.velocities = Some(velocities);
        Ok(self)
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn dt_action(&self) -> f64 {
        self.dt_action
    }

    pub fn targets(&self) -> &[Vector] {
        &self.targets
    }

    pub fn velocities(&self) -> Option<&[Vector]> {
        self.velocities.as_deref()
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.targets[0].len()
    }

    /// Time of the last target.
    pub fn end_time(&self) -> f64 {
        self.start_time + (self.targets.len() - 1) as f64 * self.dt_action
    }

    /// `(index, fraction)` of `t` within the tick grid; the index is not
    /// clamped to the chunk.
    fn locate(&self, t: f64) -> Result<(usize, f64), ReferenceError> {
        let u = (t - self.start_time) / self.dt_action;
        if u < -TICK_SLACK {
            return Err(ReferenceError::TimeBeforeChunk {
                t,
                start: self.start_time,
            });
        }
        let j = (u + TICK_SLACK).floor().max(0.0);
        let frac = u - j;
        let frac = if frac < TICK_SLACK { 0.0 } else { frac };
        Ok((j as usize, frac))
    }
}

/// Zero-order hold: `x_d = targets[floor((t - start) / dt)]`, no feedforward.
pub fn zoh_reference(chunk: &ActionChunk, t: f64) -> Result<ReferenceSample, ReferenceError> {
    let (j, _) = chunk.locate(t)?;
    let j = j.min(chunk.len() - 1);
    Ok(ReferenceSample::hold(chunk.targets[j].clone()))
}

/// Finite-difference reference: piecewise-linear position, piecewise-constant
/// velocity `(x_{j+1} - x_j) / dt`, zero acceleration. Past the last target the
/// position is held with zero velocity.
pub fn fd_reference(chunk: &ActionChunk, t: f64) -> Result<ReferenceSample, ReferenceError> {
    let (j, frac) = chunk.locate(t)?;
    let h = chunk.len();
    if j + 1 >= h {
        return Ok(ReferenceSample::hold(chunk.targets[h - 1].clone()));
    }
    let a = &chunk.targets[j];
    let b = &chunk.targets[j + 1];
    let velocity = match &chunk.velocities {
        Some(v) => v[j + 1].clone(),
        None => (b - a) / chunk.dt_action,
    };
    let position = a + (b - a) * frac;
    let d = a.len();
    Ok(ReferenceSample {
        position,
        velocity,
        acceleration: Vector::zeros(d),
    })
}

/// Analytic spline reference with terminal hold outside the domain.
///
/// Returns the sample and whether the query was clamped to the domain.
pub fn spline_reference_checked(traj: &BSplineTrajectory, t: f64) -> (ReferenceSample, bool) {
    let (start, end) = traj.domain();
    if t < start {
        return (ReferenceSample::hold(traj.eval_in_domain(start, 0)), true);
    }
    if t > end {
        return (ReferenceSample::hold(traj.eval_in_domain(end, 0)), true);
    }
    (
        ReferenceSample {
            position: traj.eval_in_domain(t, 0),
            velocity: traj.eval_in_domain(t, 1),
            acceleration: traj.eval_in_domain(t, 2),
        },
        false,
    )
}

/// `(x(t), x'(t), x''(t))` of the spline; outside the domain the nearest end
/// position is held with zero velocity and acceleration.
pub fn spline_reference(traj: &BSplineTrajectory, t: f64) -> ReferenceSample {
    spline_reference_checked(traj, t).0
}

/// Backward finite differences passed through a first-order low-pass filter
/// with time constant `1 / (2 pi cutoff)`. The filter starts at rest, so the
/// first output is zero.
///
/// The discrete update is `y_j = y_{j-1} + alpha_j (v_j - y_{j-1})` with
/// `alpha_j = 1 - exp(-dt_j / tau)`, which is exact for inputs held over each
/// sample interval.
pub fn lowpass_differentiate(
    samples: &TrajectorySamples,
    cutoff_hz: f64,
) -> Result<Vec<Vector>, ReferenceError> {
    let m = samples.len();
    if m < 2 {
        return Err(ReferenceError::TooFewSamples { needed: 2, got: m });
    }
    let times = samples.times();
    let sample_rate_hz = (m - 1) as f64 / (times[m - 1] - times[0]);
    if !(cutoff_hz > 0.0) || !(cutoff_hz < 0.5 * sample_rate_hz) {
        return Err(ReferenceError::InvalidCutoff {
            cutoff_hz,
            sample_rate_hz,
        });
    }
    let tau = 1.0 / (2.0 * std::f64::consts::PI * cutoff_hz);
    let d = samples.dims();
    let mut out = Vec::with_capacity(m);
    let mut y = Vector::zeros(d);
    out.push(y.clone());
    let mut prev = samples.position(0);
    for j in 1..m {
        let dt = times[j] - times[j - 1];
        let x = samples.position(j);
        let raw = (&x - &prev) / dt;
        let alpha = 1.0 - (-dt / tau).exp();
        y += (raw - &y) * alpha;
        out.push(y.clone());
        prev = x;
    }
    Ok(out)
}

/// Anything that can be queried for a reference sample.
pub trait ReferenceSource: Send + Sync {
    fn sample(&self, t: f64) -> Result<ReferenceSample, ReferenceError>;
}

/// An action chunk interpreted in a given mode. Spline mode is not valid here;
/// use [`SplineSource`].
#[derive(Debug, Clone)]
pub struct ChunkSource {
    pub chunk: ActionChunk,
    pub mode: ReferenceMode,
}

impl ReferenceSource for ChunkSource {
    fn sample(&self, t: f64) -> Result<ReferenceSample, ReferenceError> {
        match self.mode {
            ReferenceMode::PositionOnly => zoh_reference(&self.chunk, t),
            ReferenceMode::FiniteDifference => fd_reference(&self.chunk, t),
            ReferenceMode::Spline => Err(ReferenceError::InvalidChunk(
                "spline references need a fitted trajectory".into(),
            )),
        }
    }
}

/// A spline trajectory with a counter of out-of-domain (clamped) queries.
#[derive(Debug)]
pub struct SplineSource {
    trajectory: BSplineTrajectory,
    clamped: AtomicUsize,
}

impl SplineSource {
    pub fn new(trajectory: BSplineTrajectory) -> Self {
        Self {
            trajectory,
            clamped: AtomicUsize::new(0),
        }
    }

    pub fn trajectory(&self) -> &BSplineTrajectory {
        &self.trajectory
    }

    /// Number of queries answered by the terminal-hold policy.
    pub fn clamp_count(&self) -> usize {
        self.clamped.load(Ordering::Relaxed)
    }
}

impl ReferenceSource for SplineSource {
    fn sample(&self, t: f64) -> Result<ReferenceSample, ReferenceError> {
        let (sample, clamped) = spline_reference_checked(&self.trajectory, t);
        if clamped {
            self.clamped.fetch_add(1, Ordering::Relaxed);
        }
        Ok(sample)
    }
}

/// `3u^2 - 2u^3` on `[0, 1]`.
pub fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

/// Crossfade from `previous` to `next` over `[switch_time, switch_time + overlap]`.
///
/// Inside the window position, velocity and acceleration are the convex
/// combination `(1 - w) prev + w next` with `w = smoothstep`. Before the window
/// the previous source is returned unchanged, after it the next one.
pub fn blend_chunks(
    previous: &dyn ReferenceSource,
    next: &dyn ReferenceSource,
    switch_time: f64,
    overlap: f64,
    t: f64,
) -> Result<ReferenceSample, ReferenceError> {
    if t < switch_time {
        return previous.sample(t);
    }
    if overlap <= 0.0 || t >= switch_time + overlap {
        return next.sample(t);
    }
    let w = smoothstep((t - switch_time) / overlap);
    if w == 0.0 {
        return previous.sample(t);
    }
    let a = previous.sample(t)?;
    let b = next.sample(t)?;
    let mix = |x: &Vector, y: &Vector| x * (1.0 - w) + y * w;
    Ok(ReferenceSample {
        position: mix(&a.position, &b.position),
        velocity: mix(&a.velocity, &b.velocity),
        acceleration: mix(&a.acceleration, &b.acceleration),
    })
}
