//! Central finite differences.
//!
//! These are verification primitives: independent derivative routes used by
//! the commutativity and stationarity checks and by tests that pin analytic
//! Jacobians against a second opinion. Index convention throughout the crate:
//! `jac[[i, j]] = ∂ f_j / ∂ x_i` (row = derivative direction).

use ndarray::{Array1, Array2, ArrayView1};

use crate::scalar::Real;

/// Gradient of a scalar function by central differences with step `h`.
pub fn central_gradient<F: Real>(
    f: impl Fn(&ArrayView1<F>) -> F,
    x: &ArrayView1<F>,
    h: F,
) -> Array1<F> {
    let n = x.len();
    let two_h = F::of(2.0) * h;
    let mut out = Array1::zeros(n);
    let mut probe = x.to_owned();
    for i in 0..n {
        let xi = x[i];
        probe[i] = xi + h;
        let plus = f(&probe.view());
        probe[i] = xi - h;
        let minus = f(&probe.view());
        probe[i] = xi;
        out[i] = (plus - minus) / two_h;
    }
    out
}

/// Jacobian of a vector function by central differences with step `h`;
/// `out[[i, j]] = ∂ f_j / ∂ x_i`.
pub fn central_jacobian<F: Real>(
    f: impl Fn(&ArrayView1<F>) -> Array1<F>,
    x: &ArrayView1<F>,
    h: F,
) -> Array2<F> {
    let n = x.len();
    let two_h = F::of(2.0) * h;
    let mut probe = x.to_owned();
    let width = f(&x.view()).len();
    let mut out = Array2::zeros((n, width));
    for i in 0..n {
        let xi = x[i];
        probe[i] = xi + h;
        let plus = f(&probe.view());
        probe[i] = xi - h;
        let minus = f(&probe.view());
        probe[i] = xi;
        for j in 0..width {
            out[[i, j]] = (plus[j] - minus[j]) / two_h;
        }
    }
    out
}
