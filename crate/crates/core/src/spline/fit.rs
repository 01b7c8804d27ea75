//! Least-squares control-point extraction.
//!
//! The design matrix `A[j, i] = B_{i,k}(t_j)` has at most `k + 1` non-zeros per
//! row, so it is triangularised row by row with Givens rotations into a banded
//! upper-triangular `R` (bandwidth `k + 1`). All axes share `R`; only the
//! right-hand sides differ. Cost is `O(m k^2 + m k d)` for `m` samples.
//!
//! Rank deficiency is detected from the singular values of `R` (equal to
//! those of `A`): an empty knot span, a zero pivot, or
//! `sigma_min / sigma_max < SINGULAR_RATIO` is reported as
//! [`SplineError::SingularFit`].

use nalgebra::DMatrix;

use super::{make_clamped_uniform_knots, BSplineTrajectory, SplineError, TrajectorySamples};

/// Smallest acceptable `sigma_min / sigma_max` of the design matrix.
pub const SINGULAR_RATIO: f64 = 1e-10;

/// A fitted trajectory together with its sample residual.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineFit {
    pub trajectory: BSplineTrajectory,
    /// `sqrt(mean_j ||x_j - x(t_j)||^2)` over the fitted samples.
    pub residual_rms: f64,
}

/// Banded upper-triangular factor; `band[i * w + l]` holds `R[i, i + l]`.
struct BandedR {
    n: usize,
    w: usize,
    band: Vec<f64>,
}

impl BandedR {
    fn get(&self, i: usize, l: usize) -> f64 {
        self.band[i * self.w + l]
    }

    /// `y = R x`
    fn mul(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for l in 0..self.w.min(self.n - i) {
                acc += self.get(i, l) * x[i + l];
            }
            y[i] = acc;
        }
    }

    /// `y = R^T x`
    fn mul_t(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            for l in 0..self.w.min(self.n - i) {
                y[i + l] += self.get(i, l) * x[i];
            }
        }
    }

    /// Solves `R x = b` in place.
    fn solve(&self, b: &mut [f64]) {
        for i in (0..self.n).rev() {
            let mut acc = b[i];
            for l in 1..self.w.min(self.n - i) {
                acc -= self.get(i, l) * b[i + l];
            }
            b[i] = acc / self.get(i, 0);
        }
    }

    /// Solves `R^T x = b` in place.
    fn solve_t(&self, b: &mut [f64]) {
        for i in 0..self.n {
            let value = b[i] / self.get(i, 0);
            b[i] = value;
            for l in 1..self.w.min(self.n - i) {
                b[i + l] -= self.get(i, l) * value;
            }
        }
    }

    /// Estimates `(sigma_min, sigma_max)` by inverse and direct power
    /// iteration on `R^T R`.
    fn singular_extremes(&self) -> (f64, f64) {
        const ITERS: usize = 60;
        let n = self.n;
        let start: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i * 7919) % 13) as f64).collect();
        let normalise = |v: &mut [f64]| {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            norm
        };

        let mut v = start.clone();
        let mut tmp = vec![0.0; n];
        let mut out = vec![0.0; n];
        normalise(&mut v);
        let mut lambda_max = 0.0;
        for _ in 0..ITERS {
            self.mul(&v, &mut tmp);
            self.mul_t(&tmp, &mut out);
            lambda_max = normalise(&mut out);
            std::mem::swap(&mut v, &mut out);
        }

        let mut v = start;
        normalise(&mut v);
        let mut inv_lambda_min = 0.0;
        for _ in 0..ITERS {
            let mut w = v.clone();
            self.solve_t(&mut w);
            self.solve(&mut w);
            inv_lambda_min = normalise(&mut w);
            v = w;
        }
        ((1.0 / inv_lambda_min).sqrt(), lambda_max.sqrt())
    }
}

fn givens(a: f64, b: f64) -> (f64, f64, f64) {
    let r = a.hypot(b);
    (a / r, b / r, r)
}

/// Fits `n_ctrl` control points of the given degree on a clamped uniform knot
/// vector spanning the sample times.
pub fn fit_least_squares(
    samples: &TrajectorySamples,
    n_ctrl: usize,
    degree: usize,
) -> Result<SplineFit, SplineError> {
    let times = samples.times();
    let m = samples.len();
    if n_ctrl < degree + 1 {
        return Err(SplineError::InvalidArgument(format!(
            "need at least {} control points for degree {degree}, got {n_ctrl}",
            degree + 1
        )));
    }
    if m < n_ctrl {
        return Err(SplineError::InvalidArgument(format!(
            "{m} samples cannot determine {n_ctrl} control points"
        )));
    }
    let knots = make_clamped_uniform_knots(n_ctrl, degree, times[0], times[m - 1])?;
    fit_with_knots(samples, degree, knots)
}

/// Least-squares fit on a caller-provided knot vector.
pub(crate) fn fit_with_knots(
    samples: &TrajectorySamples,
    degree: usize,
    knots: Vec<f64>,
) -> Result<SplineFit, SplineError> {
    let n = knots.len() - degree - 1;
    let d = samples.dims();
    let w = degree + 1;
    let positions = samples.positions();
    let times = samples.times();

    // Every non-empty span of the domain must hold a sample.
    let mut occupied = vec![false; n];
    // The shape is all that matters for the design rows, so placeholder
    // control points are fine here.
    let shape = BSplineTrajectory::new(degree, knots.clone(), DMatrix::zeros(n, d))?;
    let (lo, hi) = shape.domain();
    if times[0] < lo || times[times.len() - 1] > hi {
        return Err(SplineError::InvalidArgument(format!(
            "samples span [{}, {}] outside knot domain [{lo}, {hi}]",
            times[0],
            times[times.len() - 1]
        )));
    }

    let mut r = BandedR {
        n,
        w,
        band: vec![0.0; n * w],
    };
    let mut rhs = vec![0.0; n * d];
    let mut row = [0.0f64; 8];
    let mut y = vec![0.0; d];

    for (j, &t) in times.iter().enumerate() {
        let first = shape.design_row(t, &mut row);
        occupied[first + degree] = true;
        y.iter_mut()
            .zip(positions.row(j).iter())
            .for_each(|(dst, src)| *dst = *src);
        for jj in 0..w {
            let i = first + jj;
            let pivot = row[jj];
            if pivot == 0.0 {
                continue;
            }
            let (c, s, rr) = givens(r.band[i * w], pivot);
            r.band[i * w] = rr;
            row[jj] = 0.0;
            for l in 1..(w - jj) {
                let a = r.band[i * w + l];
                let b = row[jj + l];
                r.band[i * w + l] = c * a + s * b;
                row[jj + l] = -s * a + c * b;
            }
            for (ax, yv) in y.iter_mut().enumerate() {
                let a = rhs[i * d + ax];
                rhs[i * d + ax] = c * a + s * *yv;
                *yv = -s * a + c * *yv;
            }
        }
    }

    for s in degree..n {
        if knots[s] < knots[s + 1] && !occupied[s] {
            return Err(SplineError::SingularFit {
                reason: format!(
                    "knot span [{}, {}) contains no samples",
                    knots[s],
                    knots[s + 1]
                ),
            });
        }
    }

    let diag_max = (0..n).map(|i| r.get(i, 0).abs()).fold(0.0, f64::max);
    let diag_min = (0..n).map(|i| r.get(i, 0).abs()).fold(f64::INFINITY, f64::min);
    // For triangular R, sigma_min <= min|R_ii| and sigma_max >= max|R_ii|.
    if diag_max == 0.0 || diag_min / diag_max < SINGULAR_RATIO {
        return Err(SplineError::SingularFit {
            reason: format!(
                "pivot ratio {:.3e} below {SINGULAR_RATIO:e}",
                if diag_max == 0.0 { 0.0 } else { diag_min / diag_max }
            ),
        });
    }
    let (sigma_min, sigma_max) = r.singular_extremes();
    let ratio = sigma_min / sigma_max;
    if !(ratio >= SINGULAR_RATIO) {
        return Err(SplineError::SingularFit {
            reason: format!("singular value ratio {ratio:.3e} below {SINGULAR_RATIO:e}"),
        });
    }

    let mut control = DMatrix::zeros(n, d);
    let mut column = vec![0.0; n];
    for ax in 0..d {
        for i in 0..n {
            column[i] = rhs[i * d + ax];
        }
        r.solve(&mut column);
        for i in 0..n {
            control[(i, ax)] = column[i];
        }
    }

    let trajectory = BSplineTrajectory::new(degree, knots, control)?;
    let residual_rms = residual_rms(&trajectory, samples);
    Ok(SplineFit {
        trajectory,
        residual_rms,
    })
}

/// RMS of the per-sample Euclidean residual.
pub(crate) fn residual_rms(trajectory: &BSplineTrajectory, samples: &TrajectorySamples) -> f64 {
    let positions = samples.positions();
    let sum: f64 = samples
        .times()
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let fitted = trajectory.eval_in_domain(t, 0);
            (0..samples.dims())
                .map(|c| (positions[(j, c)] - fitted[c]).powi(2))
                .sum::<f64>()
        })
        .sum();
    (sum / samples.len() as f64).sqrt()
}
