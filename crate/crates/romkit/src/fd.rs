//! Central finite-difference derivative checks.
//!
//! Deliberately naive reference implementations used by tests to validate
//! hand-coded Jacobians and gradients; nothing here is used on solver paths.

use nalgebra::{DMatrix, DVector};

/// Central-difference Jacobian of `f` at `x` with per-coordinate step
/// `h_j = eps^(1/3) * max(1, |x_j|)`.
pub fn jacobian_fd(f: impl Fn(&DVector<f64>) -> DVector<f64>, x: &DVector<f64>) -> DMatrix<f64> {
    let h0 = f64::EPSILON.cbrt();
    let fx = f(x);
    let mut jac = DMatrix::zeros(fx.len(), x.len());
    for j in 0..x.len() {
        let h = h0 * x[j].abs().max(1.0);
        let mut xp = x.clone();
        xp[j] += h;
        let mut xm = x.clone();
        xm[j] -= h;
        let col = (f(&xp) - f(&xm)) / (xp[j] - xm[j]);
        jac.set_column(j, &col);
    }
    jac
}

/// Central-difference gradient of a scalar function.
pub fn gradient_fd(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>) -> DVector<f64> {
    let h0 = f64::EPSILON.cbrt();
    DVector::from_fn(x.len(), |j, _| {
        let h = h0 * x[j].abs().max(1.0);
        let mut xp = x.clone();
        xp[j] += h;
        let mut xm = x.clone();
        xm[j] -= h;
        (f(&xp) - f(&xm)) / (xp[j] - xm[j])
    })
}

/// Largest entry of `|a - b|` scaled by the largest entry of `|b|`
/// (floored at 1 so near-zero references compare absolutely).
pub fn rel_max_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape(), "rel_max_diff shape mismatch");
    (a - b).amax() / b.amax().max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_jacobian_of_polynomial_map() {
        // f(x, y) = (x^2 y, 3y) has an easy exact Jacobian.
        let f = |v: &DVector<f64>| {
            DVector::from_vec(vec![v[0] * v[0] * v[1], 3.0 * v[1]])
        };
        let x = DVector::from_vec(vec![1.5, -0.7]);
        let j = jacobian_fd(f, &x);
        let exact = DMatrix::from_row_slice(2, 2, &[
            2.0 * x[0] * x[1],
            x[0] * x[0],
            0.0,
            3.0,
        ]);
        assert!(rel_max_diff(&j, &exact) < 1e-9);
    }

    #[test]
    fn fd_gradient_of_quadratic() {
        let f = |v: &DVector<f64>| 0.5 * v.dot(v);
        let x = DVector::from_vec(vec![2.0, -3.0, 0.25]);
        let g = gradient_fd(f, &x);
        assert!((g - x).amax() < 1e-8);
    }
}
