use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PegGeometry, SimError};
use crate::reference::ReferenceSample;
use crate::Vector;

#[derive(Debug, Clone, PartialEq)]
enum Motion {
    Quintic { start: Vector, goal: Vector },
    Ramp { start: Vector, velocity: Vector },
}

#[derive(Debug, Clone, PartialEq)]
struct Piece {
    t0: f64,
    duration: f64,
    motion: Motion,
}

impl Piece {
    fn end_position(&self) -> Vector {
        match &self.motion {
            Motion::Quintic { goal, .. } => goal.clone(),
            Motion::Ramp { start, velocity } => start + velocity * self.duration,
        }
    }

    fn sample(&self, t: f64) -> ReferenceSample {
        let local = (t - self.t0).clamp(0.0, self.duration);
        match &self.motion {
            Motion::Quintic { start, goal } => {
                if self.duration == 0.0 {
                    return ReferenceSample::hold(goal.clone());
                }
                let big_t = self.duration;
                let u = local / big_t;
                let s = u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
                let ds = 30.0 * u * u * (1.0 - u) * (1.0 - u) / big_t;
                let dds = 60.0 * u * (1.0 - 3.0 * u + 2.0 * u * u) / (big_t * big_t);
                let delta = goal - start;
                ReferenceSample {
                    position: start + &delta * s,
                    velocity: &delta * ds,
                    acceleration: delta * dds,
                }
            }
            Motion::Ramp { start, velocity } => {
                let moving = t - self.t0 < self.duration;
                ReferenceSample {
                    position: start + velocity * local,
                    velocity: if moving { velocity.clone() } else { Vector::zeros(start.len()) },
                    acceleration: Vector::zeros(start.len()),
                }
            }
        }
    }
}

/// Ground-truth motion: a sequence of minimum-jerk and constant-velocity
/// pieces, held at its end point afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pieces: Vec<Piece>,
}

fn check_vector(v: &Vector, what: &str) -> Result<(), SimError> {
    if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
        return Err(SimError::Config(format!("{what} must be a non-empty finite vector")));
    }
    Ok(())
}

fn check_duration(duration: f64) -> Result<(), SimError> {
    if !(duration >= 0.0) || !duration.is_finite() {
        return Err(SimError::Config(format!("invalid plan duration {duration}")));
    }
    Ok(())
}

impl Plan {
    /// Stationary plan.
    pub fn hold(position: Vector) -> Result<Self, SimError> {
        Self::quintic(position.clone(), position, 0.0)
    }

    /// Minimum-jerk move `s(u) = 10u³ - 15u⁴ + 6u⁵` over `duration`.
    pub fn quintic(start: Vector, goal: Vector, duration: f64) -> Result<Self, SimError> {
        check_vector(&start, "start")?;
        check_vector(&goal, "goal")?;
        check_duration(duration)?;
        if start.len() != goal.len() {
            return Err(SimError::Config("start and goal dimensions differ".into()));
        }
        Ok(Self {
            pieces: vec![Piece {
                t0: 0.0,
                duration,
                motion: Motion::Quintic { start, goal },
            }],
        })
    }

    /// Constant velocity from `start` for `duration`, then hold.
    pub fn ramp(start: Vector, velocity: Vector, duration: f64) -> Result<Self, SimError> {
        check_vector(&start, "start")?;
        check_vector(&velocity, "velocity")?;
        check_duration(duration)?;
        if start.len() != velocity.len() {
            return Err(SimError::Config("start and velocity dimensions differ".into()));
        }
        Ok(Self {
            pieces: vec![Piece {
                t0: 0.0,
                duration,
                motion: Motion::Ramp { start, velocity },
            }],
        })
    }

    /// Appends a minimum-jerk move from the current end point.
    pub fn then_quintic(mut self, goal: Vector, duration: f64) -> Result<Self, SimError> {
        check_vector(&goal, "goal")?;
        check_duration(duration)?;
        if goal.len() != self.dims() {
            return Err(SimError::Config("goal dimension differs from plan".into()));
        }
        let start = self.end_position();
        self.pieces.push(Piece {
            t0: self.duration(),
            duration,
            motion: Motion::Quintic { start, goal },
        });
        Ok(self)
    }

    pub fn dims(&self) -> usize {
        self.start_position().len()
    }

    pub fn duration(&self) -> f64 {
        let last = self.pieces.last().expect("plan has a piece");
        last.t0 + last.duration
    }

    pub fn start_position(&self) -> Vector {
        self.pieces[0].sample(0.0).position
    }

    pub fn end_position(&self) -> Vector {
        self.pieces.last().expect("plan has a piece").end_position()
    }

    /// Position, velocity and acceleration at `t`; clamped outside the plan.
    pub fn sample(&self, t: f64) -> ReferenceSample {
        if t >= self.duration() {
            return ReferenceSample::hold(self.end_position());
        }
        let idx = self.pieces.partition_point(|p| p.t0 <= t).saturating_sub(1);
        self.pieces[idx].sample(t)
    }

    pub fn position(&self, t: f64) -> Vector {
        self.sample(t).position
    }

    /// Position with a per-axis time shift: axis `i` is read at `t + shift[i]`.
    pub fn position_shifted(&self, t: f64, shift: &[f64]) -> Vector {
        let d = self.dims();
        if shift.iter().all(|&s| s == shift[0]) {
            return self.position(t + shift.first().copied().unwrap_or(0.0));
        }
        Vector::from_iterator(d, (0..d).map(|i| self.position(t + shift[i])[i]))
    }
}

/// Seeded waypoint perturbation of a transfer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub seed: u64,
    /// Half-width of the uniform offset applied to the midpoint, per axis (m).
    pub amplitude: f64,
}

fn quintic_duration(distance: f64, peak_speed: f64) -> f64 {
    15.0 / 8.0 * distance / peak_speed
}

/// Minimum-jerk transfer whose peak speed equals `peak_speed`.
///
/// With a perturbation, the path passes through a randomly displaced
/// midpoint, each leg being its own minimum-jerk move.
pub fn make_transfer_plan(
    start: &Vector,
    goal: &Vector,
    peak_speed: f64,
    perturbation: Option<Perturbation>,
) -> Result<Plan, SimError> {
    if !(peak_speed > 0.0) || !peak_speed.is_finite() {
        return Err(SimError::Config(format!("peak speed must be positive, got {peak_speed}")));
    }
    match perturbation {
        Some(p) if p.amplitude > 0.0 => {
            let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
            let mid = (start + goal) / 2.0;
            let waypoint = mid.map(|m| m + rng.random_range(-p.amplitude..=p.amplitude));
            let first = quintic_duration((&waypoint - start).norm(), peak_speed);
            let second = quintic_duration((goal - &waypoint).norm(), peak_speed);
            Plan::quintic(start.clone(), waypoint, first)?.then_quintic(goal.clone(), second)
        }
        _ => Plan::quintic(
            start.clone(),
            goal.clone(),
            quintic_duration((goal - start).norm(), peak_speed),
        ),
    }
}

/// Free-space transfer task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferTask {
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
    pub peak_speed: f64,
    /// Midpoint perturbation amplitude (m); zero for a straight move.
    pub perturbation: f64,
}

impl Default for TransferTask {
    fn default() -> Self {
        Self {
            start: vec![0.0, 0.0],
            goal: vec![0.4, 0.2],
            peak_speed: 0.5,
            perturbation: 0.0,
        }
    }
}

impl TransferTask {
    pub fn build(&self, seed: u64) -> Result<Plan, SimError> {
        let perturbation = (self.perturbation > 0.0).then_some(Perturbation {
            seed,
            amplitude: self.perturbation,
        });
        make_transfer_plan(
            &Vector::from_column_slice(&self.start),
            &Vector::from_column_slice(&self.goal),
            self.peak_speed,
            perturbation,
        )
    }
}

/// Peg insertion: a fast transfer from a seeded start to a point above the
/// fixture, then a slow descent through the funnel below the insertion depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PegTask {
    /// Mean start position relative to the hole centre (m).
    pub start_offset: [f64; 2],
    /// Half-width of the uniform start distribution per axis (m).
    pub start_spread: [f64; 2],
    /// Half-width of the uniform lateral aiming error (m).
    pub lateral_offset_max: f64,
    pub approach_height: f64,
    pub transfer_speed: f64,
    pub insert_speed: f64,
    /// How far below the insertion depth the plan descends (m).
    pub overshoot: f64,
}

impl Default for PegTask {
    fn default() -> Self {
        Self {
            start_offset: [-0.3, 0.15],
            start_spread: [0.05, 0.03],
            lateral_offset_max: 0.002,
            approach_height: 0.02,
            transfer_speed: 0.5,
            insert_speed: 0.02,
            overshoot: 0.005,
        }
    }
}

impl PegTask {
    /// Plan from an explicit start with a fixed lateral aiming error.
    pub fn plan_from(&self, geometry: &PegGeometry, start: [f64; 2], lateral_offset: f64) -> Result<Plan, SimError> {
        if !(self.transfer_speed > 0.0 && self.insert_speed > 0.0) {
            return Err(SimError::Config("peg task speeds must be positive".into()));
        }
        let [cx, cy] = geometry.hole_center;
        let x = cx + lateral_offset;
        let start = Vector::from_column_slice(&start);
        let above = Vector::from_column_slice(&[x, cy + self.approach_height]);
        let bottom = Vector::from_column_slice(&[x, cy - geometry.insertion_depth - self.overshoot]);
        let transfer = quintic_duration((&above - &start).norm(), self.transfer_speed);
        let descent = quintic_duration((&bottom - &above).norm(), self.insert_speed);
        Plan::quintic(start, above, transfer)?.then_quintic(bottom, descent)
    }

    /// Seeded start and aiming error.
    pub fn build(&self, geometry: &PegGeometry, seed: u64) -> Result<Plan, SimError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |half: f64| if half > 0.0 { rng.random_range(-half..=half) } else { 0.0 };
        let [cx, cy] = geometry.hole_center;
        let start = [
            cx + self.start_offset[0] + draw(self.start_spread[0]),
            cy + self.start_offset[1] + draw(self.start_spread[1]),
        ];
        let offset = draw(self.lateral_offset_max);
        self.plan_from(geometry, start, offset)
    }
}
