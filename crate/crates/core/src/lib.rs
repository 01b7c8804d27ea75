//! Velocity-feedforward trajectory representations for compliant control.
//!
//! The crate is organised bottom-up:
//!
//! - [`spline`]: cubic B-spline trajectories, Cox–de Boor bases, analytical
//!   derivatives and least-squares control-point extraction.
//! - [`reference`]: turns low-rate action chunks into high-rate reference
//!   samples (zero-order hold, finite-difference, spline) and blends chunks.
//! - [`control`]: Cartesian admittance law with velocity/acceleration
//!   feedforward and its time discretisation.
//! - [`sim`]: deterministic planar plant, penalty contact scenarios and the
//!   episode runner that ties reference generation to control.
//! - [`metrics`]: tracking errors, cumulative success curves and two-sample
//!   t-tests.
//! - [`io`]: trajectory logs, spline datasets, traces and summary tables.
//! - [`config`] and [`cli`]: experiment configuration and the command
//!   implementations behind the `fflab` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod control;
pub mod io;
pub mod metrics;
pub mod reference;
pub mod sim;
pub mod spline;

/// Column vector used for positions, velocities, forces.
pub type Vector = nalgebra::DVector<f64>;
