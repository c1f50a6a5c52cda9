//! Small numerical helpers shared across modules.

use nalgebra::DMatrix;

/// Pairwise (cascade) summation; error grows as O(log n) instead of O(n).
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 8;
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Composite Simpson rule on an equally spaced grid. Falls back to the
/// trapezoid rule for the last interval when the number of intervals is odd.
pub fn simpson(values: &[f64], step: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let intervals = n - 1;
    let even = intervals - intervals % 2;
    let mut acc = 0.0;
    for k in (0..even).step_by(2) {
        acc += values[k] + 4.0 * values[k + 1] + values[k + 2];
    }
    let mut total = acc * step / 3.0;
    if even < intervals {
        total += 0.5 * step * (values[n - 2] + values[n - 1]);
    }
    total
}

/// Inverse of a symmetric positive definite matrix, falling back to LU.
/// Returns `None` for a numerically singular matrix.
pub(crate) fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if let Some(ch) = m.clone().cholesky() {
        return Some(ch.inverse());
    }
    m.clone().try_inverse()
}

/// 2-norm condition number from singular values.
pub(crate) fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
