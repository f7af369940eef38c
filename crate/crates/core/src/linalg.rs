//! Small dense/tridiagonal helpers.

use nalgebra::DVector;

/// Solves `T x = rhs` for tridiagonal `T` (Thomas algorithm, no pivoting).
///
/// `lower[i]` couples rows `i + 1` and `i`, `upper[i]` rows `i` and `i + 1`.
/// Intended for diagonally dominant or SPD systems only.
pub(crate) fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &DVector<f64>,
) -> Option<DVector<f64>> {
    let n = diag.len();
    debug_assert!(lower.len() + 1 == n.max(1) && upper.len() + 1 == n.max(1));
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    if denom == 0.0 || !denom.is_finite() {
        return None;
    }
    if n > 1 {
        c[0] = upper[0] / denom;
    }
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i - 1] * c[i - 1];
        if denom == 0.0 || !denom.is_finite() {
            return None;
        }
        if i + 1 < n {
            c[i] = upper[i] / denom;
        }
        d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / denom;
    }
    let mut x = DVector::zeros(n);
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    Some(x)
}
