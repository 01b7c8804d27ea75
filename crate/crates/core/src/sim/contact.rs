use std::f64::consts::FRAC_PI_4;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::Vector;

/// Planar funnel-and-channel fixture, expressed in coordinates of the peg's
/// reference point.
///
/// The top surface lies at `y = hole_center[1]`. Below it a funnel narrows at
/// `funnel_halfangle` from a mouth of half-width `hole_halfwidth` down to the
/// channel, whose half-width for the reference point equals `clearance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PegGeometry {
    pub hole_center: [f64; 2],
    pub hole_halfwidth: f64,
    pub clearance: f64,
    pub wall_stiffness: f64,
    pub wall_damping: f64,
    pub funnel_halfangle: f64,
    pub insertion_depth: f64,
    /// Penalty walls admit small penetrations; the lateral success test
    /// accepts this much beyond the clearance.
    pub lateral_tolerance: f64,
}

impl Default for PegGeometry {
    fn default() -> Self {
        Self {
            hole_center: [0.0, 0.0],
            hole_halfwidth: 0.005,
            clearance: 0.0005,
            wall_stiffness: 5.0e4,
            wall_damping: 50.0,
            funnel_halfangle: FRAC_PI_4,
            insertion_depth: 0.01,
            lateral_tolerance: 1.0e-4,
        }
    }
}

impl PegGeometry {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: &str| Err(SimError::Config(format!("peg geometry: {msg}")));
        if self.hole_center.iter().any(|c| !c.is_finite()) {
            return bad("hole_center must be finite");
        }
        if !(self.clearance > 0.0) {
            return bad("clearance must be positive");
        }
        if !(self.wall_stiffness > 0.0) {
            return bad("wall_stiffness must be positive");
        }
        if !(self.insertion_depth > 0.0) {
            return bad("insertion_depth must be positive");
        }
        if !(self.wall_damping >= 0.0) {
            return bad("wall_damping must be non-negative");
        }
        if !(self.hole_halfwidth >= self.clearance) {
            return bad("hole_halfwidth must be at least the clearance");
        }
        if !(self.funnel_halfangle > 0.0 && self.funnel_halfangle < std::f64::consts::FRAC_PI_2) {
            return bad("funnel_halfangle must lie in (0, pi/2)");
        }
        if !(self.lateral_tolerance >= 0.0) {
            return bad("lateral_tolerance must be non-negative");
        }
        Ok(())
    }

    /// Vertical extent of the funnel.
    pub fn funnel_depth(&self) -> f64 {
        (self.hole_halfwidth - self.clearance) / self.funnel_halfangle.tan()
    }

    /// Free half-width at height `dy` relative to the top surface (`dy < 0`).
    fn free_halfwidth(&self, dy: f64) -> f64 {
        let h = self.funnel_depth();
        if dy <= -h {
            self.clearance
        } else {
            self.clearance + (dy + h) * self.funnel_halfangle.tan()
        }
    }

    /// Penetration depth and outward unit normal when the point lies inside
    /// a wall.
    pub fn penetration(&self, p: [f64; 2]) -> Option<(f64, [f64; 2])> {
        let dx = p[0] - self.hole_center[0];
        let dy = p[1] - self.hole_center[1];
        if dy >= 0.0 {
            return None;
        }
        let s = dx.abs();
        if s <= self.free_halfwidth(dy) {
            return None;
        }
        let side = if dx < 0.0 { -1.0 } else { 1.0 };
        let w = self.hole_halfwidth;
        let c = self.clearance;
        let h = self.funnel_depth();

        let top = [s.max(w), 0.0];
        let funnel = closest_on_segment([s, dy], [w, 0.0], [c, -h]);
        let channel = [c, dy.min(-h)];
        let (depth, q) = [top, funnel, channel]
            .into_iter()
            .map(|q| (((q[0] - s).powi(2) + (q[1] - dy).powi(2)).sqrt(), q))
            .fold((f64::INFINITY, [0.0, 0.0]), |best, cand| if cand.0 < best.0 { cand } else { best });
        if !(depth > 0.0) {
            return None;
        }
        let n = [side * (q[0] - s) / depth, (q[1] - dy) / depth];
        Some((depth, n))
    }

    /// Peg inserted: laterally inside the channel and below the insertion depth.
    pub fn inserted(&self, p: &Vector) -> bool {
        let dx = p[0] - self.hole_center[0];
        let dy = p[1] - self.hole_center[1];
        dx.abs() <= self.clearance + self.lateral_tolerance && dy <= -self.insertion_depth
    }
}

fn closest_on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    if len2 == 0.0 {
        return a;
    }
    let u = (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0);
    [a[0] + u * ab[0], a[1] + u * ab[1]]
}

/// Environment the episode runs in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Scenario {
    FreeSpace,
    ConstantForce { force: Vec<f64> },
    PegInHole(PegGeometry),
}

impl Scenario {
    pub fn validate(&self, dims: usize) -> Result<(), SimError> {
        match self {
            Scenario::FreeSpace => Ok(()),
            Scenario::ConstantForce { force } => {
                if force.len() != dims {
                    return Err(SimError::Config(format!(
                        "constant force has {} entries, plan has {dims} dimensions",
                        force.len()
                    )));
                }
                if force.iter().any(|f| !f.is_finite()) {
                    return Err(SimError::Config("constant force must be finite".into()));
                }
                Ok(())
            }
            Scenario::PegInHole(geometry) => {
                if dims != 2 {
                    return Err(SimError::Config(format!(
                        "peg-in-hole is planar, plan has {dims} dimensions"
                    )));
                }
                geometry.validate()
            }
        }
    }

    /// Whether the task is complete. Free space succeeds on settling within
    /// 1 mm of `goal`; a constant-force scenario never terminates.
    pub fn is_success(&self, x: &Vector, v: &Vector, goal: &Vector) -> bool {
        match self {
            Scenario::FreeSpace => (x - goal).norm() <= 1e-3 && v.norm() <= 1e-2,
            Scenario::ConstantForce { .. } => false,
            Scenario::PegInHole(geometry) => geometry.inserted(x),
        }
    }
}

/// Force exerted by the environment on the robot.
///
/// Peg walls push along the outward normal with magnitude
/// `max(0, κ p + c v_approach)`.
pub fn contact_force(scenario: &Scenario, x: &Vector, v: &Vector) -> Vector {
    match scenario {
        Scenario::FreeSpace => Vector::zeros(x.len()),
        Scenario::ConstantForce { force } => Vector::from_column_slice(force),
        Scenario::PegInHole(g) => {
            let mut f = Vector::zeros(2);
            if let Some((depth, n)) = g.penetration([x[0], x[1]]) {
                let approach = -(v[0] * n[0] + v[1] * n[1]);
                let magnitude = (g.wall_stiffness * depth + g.wall_damping * approach).max(0.0);
                f[0] = magnitude * n[0];
                f[1] = magnitude * n[1];
            }
            f
        }
    }
}
