//! Cutting trajectories into per-chunk windows.
//!
//! A window `[a, b]` of a fitted trajectory is extracted exactly by Boehm knot
//! insertion: `a` and `b` are raised to multiplicity `k + 1`, after which the
//! control points between them form a clamped spline that coincides with the
//! original curve on the window.

use nalgebra::DMatrix;

use super::fit::residual_rms;
use super::{fit_least_squares, BSplineTrajectory, SplineError, TrajectorySamples};

/// One entry of a spline dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineChunk {
    pub trajectory: BSplineTrajectory,
    pub fit_residual_rms: f64,
}

/// Inserts knot `u` once, returning the refined trajectory (same curve).
pub fn insert_knot(traj: &BSplineTrajectory, u: f64) -> Result<BSplineTrajectory, SplineError> {
    let (start, end) = traj.domain();
    if !(start..=end).contains(&u) {
        return Err(SplineError::Domain { t: u, start, end });
    }
    let k = traj.degree();
    let knots = traj.knots();
    let p = traj.control_points();
    let n = traj.n_ctrl();
    let d = traj.dims();
    // Last span whose left knot is <= u, limited to valid spans.
    let s = (knots.partition_point(|&x| x <= u) - 1).min(n - 1).max(k);

    let mut cp = DMatrix::zeros(n + 1, d);
    for i in 0..=n {
        if i + k <= s {
            cp.set_row(i, &p.row(i));
        } else if i > s {
            cp.set_row(i, &p.row(i - 1));
        } else {
            let den = knots[i + k] - knots[i];
            let alpha = if den == 0.0 { 0.0 } else { (u - knots[i]) / den };
            let row = p.row(i) * alpha + p.row(i - 1) * (1.0 - alpha);
            cp.set_row(i, &row);
        }
    }
    let mut new_knots = Vec::with_capacity(knots.len() + 1);
    new_knots.extend_from_slice(&knots[..=s]);
    new_knots.push(u);
    new_knots.extend_from_slice(&knots[s + 1..]);
    BSplineTrajectory::new(k, new_knots, cp)
}

fn multiplicity(knots: &[f64], u: f64) -> usize {
    knots.iter().filter(|&&x| x == u).count()
}

impl BSplineTrajectory {
    /// The clamped sub-trajectory that equals `self` on `[a, b]`.
    pub fn window(&self, a: f64, b: f64) -> Result<BSplineTrajectory, SplineError> {
        let (start, end) = self.domain();
        if !(a < b) || a < start || b > end {
            return Err(SplineError::InvalidArgument(format!(
                "window [{a}, {b}] is not inside the domain [{start}, {end}]"
            )));
        }
        let k = self.degree();
        let mut refined = self.clone();
        for u in [a, b] {
            while multiplicity(refined.knots(), u) < k + 1 {
                refined = insert_knot(&refined, u)?;
            }
        }
        let knots = refined.knots();
        let first = knots.iter().position(|&x| x == a).expect("inserted knot");
        let last = knots.iter().rposition(|&x| x == b).expect("inserted knot");
        let sub_knots = knots[first..=last].to_vec();
        let n_sub = sub_knots.len() - k - 1;
        let cp = refined.control_points().rows(first, n_sub).into_owned();
        BSplineTrajectory::new(k, sub_knots, cp)
    }
}

fn check_windows(windows: &[(f64, f64)]) -> Result<(), SplineError> {
    if windows.iter().any(|(a, b)| !(a < b)) {
        return Err(SplineError::InvalidArgument("window with a >= b".into()));
    }
    Ok(())
}

/// One global least-squares fit, cut into the given windows.
///
/// Each chunk's residual is computed on the samples that fall inside it.
pub fn fit_windows(
    samples: &TrajectorySamples,
    n_ctrl: usize,
    degree: usize,
    windows: &[(f64, f64)],
) -> Result<Vec<SplineChunk>, SplineError> {
    check_windows(windows)?;
    let global = fit_least_squares(samples, n_ctrl, degree)?;
    windows
        .iter()
        .map(|&(a, b)| {
            let trajectory = global.trajectory.window(a, b)?;
            let fit_residual_rms = samples
                .slice_time(a, b)
                .map_or(0.0, |inside| residual_rms(&trajectory, &inside));
            Ok(SplineChunk {
                trajectory,
                fit_residual_rms,
            })
        })
        .collect()
}

/// Independent fits per window, each with `n_ctrl` control points.
pub fn fit_per_window(
    samples: &TrajectorySamples,
    n_ctrl: usize,
    degree: usize,
    windows: &[(f64, f64)],
) -> Result<Vec<SplineChunk>, SplineError> {
    check_windows(windows)?;
    windows
        .iter()
        .map(|&(a, b)| {
            let inside = samples.slice_time(a, b).ok_or_else(|| {
                SplineError::InvalidArgument(format!("window [{a}, {b}] holds no samples"))
            })?;
            let fit = fit_least_squares(&inside, n_ctrl, degree)?;
            Ok(SplineChunk {
                trajectory: fit.trajectory,
                fit_residual_rms: fit.residual_rms,
            })
        })
        .collect()
}
