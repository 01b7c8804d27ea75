//! Cubic B-spline trajectories.
//!
//! A trajectory of degree `k` with control points `P_0..P_n` lives on the knot
//! vector `t_0..t_{n+k+1}` and is evaluable on `[t_k, t_{n+1}]`. Position,
//! velocity and acceleration are computed from the `k + 1` control points of
//! the active span only.

mod basis;
mod fit;
mod window;

pub use basis::{basis, basis_derivative, nonzero_basis};
pub use fit::{fit_least_squares, SplineFit, SINGULAR_RATIO};
pub use window::{fit_per_window, fit_windows, insert_knot, SplineChunk};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::Vector;

/// Default spline degree.
pub const CUBIC: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SplineError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("basis index {index} at degree {degree} is out of range for {knots} knots")]
    IndexOutOfRange {
        index: usize,
        degree: usize,
        knots: usize,
    },
    #[error("t = {t} lies outside the evaluation domain [{start}, {end}]")]
    Domain { t: f64, start: f64, end: f64 },
    #[error("singular fit: {reason}")]
    SingularFit { reason: String },
}

/// Clamped knot vector with uniformly spaced interior knots.
///
/// The first and last `degree + 1` knots equal `t_start` and `t_end`.
pub fn make_clamped_uniform_knots(
    n_ctrl: usize,
    degree: usize,
    t_start: f64,
    t_end: f64,
) -> Result<Vec<f64>, SplineError> {
    if n_ctrl < degree + 1 {
        return Err(SplineError::InvalidArgument(format!(
            "need at least {} control points for degree {degree}, got {n_ctrl}",
            degree + 1
        )));
    }
    if !(t_end > t_start) || !t_start.is_finite() || !t_end.is_finite() {
        return Err(SplineError::InvalidArgument(format!(
            "knot range [{t_start}, {t_end}] is empty"
        )));
    }
    let interior = n_ctrl - degree - 1;
    let mut knots = Vec::with_capacity(n_ctrl + degree + 1);
    knots.extend(std::iter::repeat_n(t_start, degree + 1));
    let segments = (interior + 1) as f64;
    for j in 1..=interior {
        knots.push(t_start + (t_end - t_start) * (j as f64 / segments));
    }
    knots.extend(std::iter::repeat_n(t_end, degree + 1));
    Ok(knots)
}

/// Time-stamped positions, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySamples {
    times: Vec<f64>,
    positions: DMatrix<f64>,
}

impl TrajectorySamples {
    pub fn new(times: Vec<f64>, positions: DMatrix<f64>) -> Result<Self, SplineError> {
        if times.len() != positions.nrows() {
            return Err(SplineError::InvalidArgument(format!(
                "{} times but {} position rows",
                times.len(),
                positions.nrows()
            )));
        }
        if positions.ncols() == 0 {
            return Err(SplineError::InvalidArgument("zero spatial dimensions".into()));
        }
        if let Some(j) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(SplineError::InvalidArgument(format!(
                "times must be strictly increasing (sample {} -> {})",
                j,
                j + 1
            )));
        }
        if times.iter().any(|t| !t.is_finite()) || positions.iter().any(|x| !x.is_finite()) {
            return Err(SplineError::InvalidArgument("non-finite sample".into()));
        }
        Ok(Self { times, positions })
    }

    /// Builds samples from per-row vectors.
    pub fn from_rows(times: Vec<f64>, rows: &[Vector]) -> Result<Self, SplineError> {
        let dims = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != dims) {
            return Err(SplineError::InvalidArgument("rows differ in dimension".into()));
        }
        let positions = DMatrix::from_fn(rows.len(), dims, |i, j| rows[i][j]);
        Self::new(times, positions)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn positions(&self) -> &DMatrix<f64> {
        &self.positions
    }

    pub fn position(&self, j: usize) -> Vector {
        self.positions.row(j).transpose()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.positions.ncols()
    }

    /// Samples whose time lies in `[start, end]`.
    pub fn slice_time(&self, start: f64, end: f64) -> Option<Self> {
        let lo = self.times.partition_point(|&t| t < start);
        let hi = self.times.partition_point(|&t| t <= end);
        if hi <= lo {
            return None;
        }
        Some(Self {
            times: self.times[lo..hi].to_vec(),
            positions: self.positions.rows(lo, hi - lo).into_owned(),
        })
    }
}

/// A B-spline curve `x(t) = Σ B_{i,k}(t) P_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BSplineTrajectory {
    degree: usize,
    knots: Vec<f64>,
    /// Row `i` holds control point `P_i`.
    control_points: DMatrix<f64>,
}

impl BSplineTrajectory {
    pub fn new(
        degree: usize,
        knots: Vec<f64>,
        control_points: DMatrix<f64>,
    ) -> Result<Self, SplineError> {
        let n_ctrl = control_points.nrows();
        if degree == 0 || degree > 5 {
            return Err(SplineError::InvalidArgument(format!(
                "unsupported degree {degree}"
            )));
        }
        if n_ctrl < degree + 1 {
            return Err(SplineError::InvalidArgument(format!(
                "{n_ctrl} control points cannot carry degree {degree}"
            )));
        }
        if control_points.ncols() == 0 {
            return Err(SplineError::InvalidArgument("zero spatial dimensions".into()));
        }
        if knots.len() != n_ctrl + degree + 1 {
            return Err(SplineError::InvalidArgument(format!(
                "expected {} knots for {n_ctrl} control points of degree {degree}, got {}",
                n_ctrl + degree + 1,
                knots.len()
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) || knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(SplineError::InvalidArgument(
                "knots must be finite and non-decreasing".into(),
            ));
        }
        if !(knots[n_ctrl] > knots[degree]) {
            return Err(SplineError::InvalidArgument("empty evaluation domain".into()));
        }
        if control_points.iter().any(|x| !x.is_finite()) {
            return Err(SplineError::InvalidArgument("non-finite control point".into()));
        }
        Ok(Self {
            degree,
            knots,
            control_points,
        })
    }

    /// Clamped uniform spline through the given control point rows.
    pub fn clamped_uniform(
        degree: usize,
        t_start: f64,
        t_end: f64,
        control_points: DMatrix<f64>,
    ) -> Result<Self, SplineError> {
        let knots = make_clamped_uniform_knots(control_points.nrows(), degree, t_start, t_end)?;
        Self::new(degree, knots, control_points)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn control_points(&self) -> &DMatrix<f64> {
        &self.control_points
    }

    pub fn n_ctrl(&self) -> usize {
        self.control_points.nrows()
    }

    pub fn dims(&self) -> usize {
        self.control_points.ncols()
    }

    /// `[t_k, t_{n+1}]`.
    pub fn domain(&self) -> (f64, f64) {
        (self.knots[self.degree], self.knots[self.n_ctrl()])
    }

    /// Span index `s` in `[k, n]` with `t_s <= t < t_{s+1}`; the right end of
    /// the domain maps to the last non-empty span.
    pub(crate) fn span(&self, t: f64) -> usize {
        let k = self.degree;
        let n = self.n_ctrl() - 1;
        let (_, end) = self.domain();
        if t >= end {
            return (k..=n)
                .rev()
                .find(|&s| self.knots[s] < self.knots[s + 1])
                .unwrap_or(n);
        }
        let s = self.knots.partition_point(|&x| x <= t).saturating_sub(1);
        s.clamp(k, n)
    }

    /// Position (`order = 0`), velocity (`1`) or acceleration (`2`) at `t`.
    ///
    /// Orders above the degree are identically zero.
    pub fn eval(&self, t: f64, order: usize) -> Result<Vector, SplineError> {
        let (start, end) = self.domain();
        if !(start..=end).contains(&t) {
            return Err(SplineError::Domain { t, start, end });
        }
        if order > 2 {
            return Err(SplineError::InvalidArgument(format!(
                "derivative order must be 0, 1 or 2, got {order}"
            )));
        }
        Ok(self.eval_in_domain(t, order))
    }

    pub(crate) fn eval_in_domain(&self, t: f64, order: usize) -> Vector {
        let k = self.degree;
        let d = self.dims();
        if order > k {
            return Vector::zeros(d);
        }
        let s = self.span(t);
        let first = s - k;
        // Local window of control points, differenced `order` times (hodograph).
        let mut local: Vec<f64> = Vec::with_capacity((k + 1) * d);
        for j in 0..=k {
            local.extend(self.control_points.row(first + j).iter());
        }
        let mut count = k + 1;
        for r in 1..=order {
            let p = k - r + 1;
            for j in 0..count - 1 {
                let i = first + j;
                let den = self.knots[i + p + r] - self.knots[i + r];
                let scale = if den == 0.0 { 0.0 } else { p as f64 / den };
                for c in 0..d {
                    local[j * d + c] = (local[(j + 1) * d + c] - local[j * d + c]) * scale;
                }
            }
            count -= 1;
        }
        let mut weights = [0.0f64; 8];
        nonzero_basis(&self.knots, s, k - order, t, &mut weights);
        let mut out = Vector::zeros(d);
        for j in 0..count {
            let w = weights[j];
            if w != 0.0 {
                for c in 0..d {
                    out[c] += w * local[j * d + c];
                }
            }
        }
        out
    }

    /// Evaluates all control-point weights for `t` (the row of the design
    /// matrix), returning the first control-point index and the weights.
    pub(crate) fn design_row(&self, t: f64, out: &mut [f64]) -> usize {
        let s = self.span(t);
        nonzero_basis(&self.knots, s, self.degree, t, out);
        s - self.degree
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamped_knot_examples() {
        assert_eq!(
            make_clamped_uniform_knots(4, 3, 0.0, 1.0).unwrap(),
            vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]
        );
        assert_eq!(
            make_clamped_uniform_knots(5, 3, 0.0, 1.0).unwrap(),
            vec![0.0, 0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0, 1.0]
        );
        assert_eq!(
            make_clamped_uniform_knots(6, 3, 0.0, 3.0).unwrap(),
            vec![0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 3.0, 3.0, 3.0, 3.0]
        );
    }

    #[test]
    fn clamped_knot_errors() {
        assert!(make_clamped_uniform_knots(3, 3, 0.0, 1.0).is_err());
        assert!(make_clamped_uniform_knots(4, 3, 1.0, 1.0).is_err());
        assert!(make_clamped_uniform_knots(4, 3, 1.0, 0.0).is_err());
    }

    #[test]
    fn constant_curve_has_zero_derivatives() {
        let cp = DMatrix::from_fn(7, 2, |_, c| if c == 0 { 0.25 } else { -1.5 });
        let traj = BSplineTrajectory::clamped_uniform(3, 0.0, 2.0, cp).unwrap();
        for step in 0..=40 {
            let t = step as f64 * 0.05;
            let x = traj.eval(t, 0).unwrap();
            assert!((x[0] - 0.25).abs() < 1e-14 && (x[1] + 1.5).abs() < 1e-14);
            assert!(traj.eval(t, 1).unwrap().norm() < 1e-12);
            assert!(traj.eval(t, 2).unwrap().norm() < 1e-10);
        }
    }

    #[test]
    fn clamped_endpoints_interpolate() {
        let cp = DMatrix::from_row_slice(5, 1, &[1.0, 4.0, -2.0, 0.5, 3.0]);
        let traj = BSplineTrajectory::clamped_uniform(3, 0.0, 1.0, cp).unwrap();
        assert_eq!(traj.eval(0.0, 0).unwrap()[0], 1.0);
        assert!((traj.eval(1.0, 0).unwrap()[0] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn domain_violation() {
        let cp = DMatrix::from_row_slice(4, 1, &[0.0, 1.0, 2.0, 3.0]);
        let traj = BSplineTrajectory::clamped_uniform(3, 0.0, 1.0, cp).unwrap();
        assert!(matches!(traj.eval(1.0 + 1e-12, 0), Err(SplineError::Domain { .. })));
        assert!(matches!(traj.eval(-1e-12, 0), Err(SplineError::Domain { .. })));
    }

    #[test]
    fn rejects_malformed_construction() {
        let cp = DMatrix::from_row_slice(4, 1, &[0.0, 1.0, 2.0, 3.0]);
        assert!(BSplineTrajectory::new(3, vec![0.0; 7], cp.clone()).is_err());
        assert!(BSplineTrajectory::new(
            3,
            vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.5, 1.0, 1.0],
            cp.clone()
        )
        .is_err());
        assert!(BSplineTrajectory::new(3, vec![0.0; 8], cp).is_err());
    }
}
