//! Deterministic planar simulation.
//!
//! The plant is the admittance-controlled commanded motion, optionally
//! filtered by a first-order inner loop. Contact is modelled with penalty
//! springs; the peg is reduced to a reference point, so every wall is offset
//! inwards by the clearance.

mod contact;
mod episode;
mod plan;

pub use contact::{contact_force, PegGeometry, Scenario};
pub use episode::{run_episode, Anchoring, EpisodeConfig, EpisodeTrace, PolicyConfig};
pub use plan::{make_transfer_plan, PegTask, Perturbation, Plan, TransferTask};

use thiserror::Error;

use crate::control::ControlError;
use crate::reference::ReferenceError;
use crate::spline::SplineError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("spline fit failed at t = {time:.4} s: {source}")]
    Fit { time: f64, source: SplineError },
    #[error(transparent)]
    Reference(#[from] ReferenceError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error("state became non-finite at step {step} (t = {time:.6} s)")]
    NonFinite { step: usize, time: f64 },
}
