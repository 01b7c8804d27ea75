//! Cox–de Boor basis functions.
//!
//! Two routes are provided. [`basis`] and [`basis_derivative`] follow the
//! textbook recursion literally and are used as the readable reference.
//! [`nonzero_basis`] evaluates only the `p + 1` functions that are non-zero on
//! one knot span with the triangular table, which is what curve evaluation
//! and fitting use.
//!
//! Both routes use `0/0 := 0` for terms whose knot-span denominator vanishes,
//! and extend the half-open degree-0 indicator so that the last non-empty span
//! also contains the right end of the knot vector.

use super::SplineError;

/// Index of the last span `[t_i, t_{i+1})` with non-zero length.
fn last_nonempty_span(knots: &[f64]) -> Option<usize> {
    (0..knots.len().saturating_sub(1))
        .rev()
        .find(|&i| knots[i] < knots[i + 1])
}

fn degree_zero(i: usize, t: f64, knots: &[f64], last_span: Option<usize>) -> f64 {
    let (lo, hi) = (knots[i], knots[i + 1]);
    if lo <= t && t < hi {
        return 1.0;
    }
    if Some(i) == last_span && t == hi {
        return 1.0;
    }
    0.0
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn recurse(i: usize, k: usize, t: f64, knots: &[f64], last: Option<usize>) -> f64 {
    if k == 0 {
        return degree_zero(i, t, knots, last);
    }
    let left = ratio(t - knots[i], knots[i + k] - knots[i]);
    let right = ratio(knots[i + k + 1] - t, knots[i + k + 1] - knots[i + 1]);
    let mut value = 0.0;
    if left != 0.0 {
        value += left * recurse(i, k - 1, t, knots, last);
    }
    if right != 0.0 {
        value += right * recurse(i + 1, k - 1, t, knots, last);
    }
    value
}

fn recurse_derivative(
    i: usize,
    k: usize,
    t: f64,
    knots: &[f64],
    order: usize,
    last: Option<usize>,
) -> f64 {
    if order == 0 {
        return recurse(i, k, t, knots, last);
    }
    let kf = k as f64;
    let left = ratio(kf, knots[i + k] - knots[i]);
    let right = ratio(kf, knots[i + k + 1] - knots[i + 1]);
    let mut value = 0.0;
    if left != 0.0 {
        value += left * recurse_derivative(i, k - 1, t, knots, order - 1, last);
    }
    if right != 0.0 {
        value -= right * recurse_derivative(i + 1, k - 1, t, knots, order - 1, last);
    }
    value
}

fn check_args(i: usize, k: usize, t: f64, knots: &[f64]) -> Result<(), SplineError> {
    if i + k + 1 >= knots.len() {
        return Err(SplineError::IndexOutOfRange {
            index: i,
            degree: k,
            knots: knots.len(),
        });
    }
    let (first, last) = (knots[0], knots[knots.len() - 1]);
    if !(first..=last).contains(&t) {
        return Err(SplineError::Domain {
            t,
            start: first,
            end: last,
        });
    }
    Ok(())
}

/// `B_{i,k}(t)` by the Cox–de Boor recursion.
pub fn basis(i: usize, k: usize, t: f64, knots: &[f64]) -> Result<f64, SplineError> {
    check_args(i, k, t, knots)?;
    Ok(recurse(i, k, t, knots, last_nonempty_span(knots)))
}

/// First or second derivative of `B_{i,k}` with respect to `t`.
///
/// Uses `B'_{i,k} = k/(t_{i+k}-t_i) B_{i,k-1} - k/(t_{i+k+1}-t_{i+1}) B_{i+1,k-1}`
/// applied `order` times.
pub fn basis_derivative(
    i: usize,
    k: usize,
    t: f64,
    knots: &[f64],
    order: usize,
) -> Result<f64, SplineError> {
    if order == 0 || order > 2 {
        return Err(SplineError::InvalidArgument(format!(
            "derivative order must be 1 or 2, got {order}"
        )));
    }
    if order > k {
        return Err(SplineError::InvalidArgument(format!(
            "derivative order {order} exceeds degree {k}"
        )));
    }
    check_args(i, k, t, knots)?;
    Ok(recurse_derivative(
        i,
        k,
        t,
        knots,
        order,
        last_nonempty_span(knots),
    ))
}

/// The `p + 1` basis functions of degree `p` that can be non-zero on `span`,
/// i.e. `[N_{span-p,p}(t), ..., N_{span,p}(t)]`.
///
/// `span` must satisfy `knots[span] <= t <= knots[span + 1]` with a non-empty
/// span; the caller is responsible for locating it.
pub fn nonzero_basis(knots: &[f64], span: usize, p: usize, t: f64, out: &mut [f64]) {
    debug_assert!(out.len() > p);
    let mut left = [0.0f64; 8];
    let mut right = [0.0f64; 8];
    debug_assert!(p < left.len());
    out[0] = 1.0;
    for j in 1..=p {
        left[j] = t - knots[span + 1 - j];
        right[j] = knots[span + j] - t;
        let mut saved = 0.0;
        for r in 0..j {
            let den = right[r + 1] + left[j - r];
            let temp = if den == 0.0 { 0.0 } else { out[r] / den };
            out[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        out[j] = saved;
    }
}
