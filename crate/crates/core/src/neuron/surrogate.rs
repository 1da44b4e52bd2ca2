//! Arctan surrogate for the spike threshold.
//!
//! `sigma(x) = atan(pi x) / pi + 1/2`, with `sigma'(x) = 1 / (1 + pi^2 x^2)`.

use std::f64::consts::PI;

use crate::real::{cast, Real};

/// `(sigma(x), sigma'(x))`.
pub fn surrogate(x: f64) -> (f64, f64) {
    (surrogate_value(x), surrogate_grad(x))
}

#[inline]
pub fn surrogate_value<F: Real>(x: F) -> F {
    let pi: F = cast(PI);
    (pi * x).atan() / pi + cast(0.5)
}

#[inline]
pub fn surrogate_grad<F: Real>(x: F) -> F {
    let pi_x = cast::<F>(PI) * x;
    F::one() / (F::one() + pi_x * pi_x)
}
