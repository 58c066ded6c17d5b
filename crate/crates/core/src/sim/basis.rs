//! Sine basis and the monotone distortion maps.

use std::f64::consts::{PI, SQRT_2};

/// `sqrt(2) sin(2 pi j r)`, orthonormal on `[0, 1]` and zero at both ends.
pub fn basis_fn(j: usize, r: f64) -> f64 {
    SQRT_2 * (2.0 * PI * j as f64 * r).sin()
}

/// `sup |d/dr basis_fn(j, r)| = 2 sqrt(2) pi j`.
pub fn kappa(j: usize) -> f64 {
    2.0 * SQRT_2 * PI * j as f64
}

/// `basis_fn(1..=count, r)` by the angle-addition recurrence.
pub fn basis_values(count: usize, r: f64, out: &mut [f64]) {
    let theta = 2.0 * PI * r;
    let (s1, c1) = theta.sin_cos();
    let (mut s, mut c) = (s1, c1);
    for v in out.iter_mut().take(count) {
        *v = SQRT_2 * s;
        let next_s = s * c1 + c * s1;
        c = c * c1 - s * s1;
        s = next_s;
    }
}

/// Table `t[j][k] = basis_fn(j + 1, points[k])` computed with direct sines.
pub fn basis_table(count: usize, points: &[f64]) -> Vec<Vec<f64>> {
    (1..=count)
        .map(|j| points.iter().map(|&p| basis_fn(j, p)).collect())
        .collect()
}

/// `g_a(r) = r - sin(a r) / |a|`, the identity for `a = 0`. Non-decreasing in `r`.
pub fn distortion_map(a: f64, r: f64) -> f64 {
    if a == 0.0 {
        r
    } else {
        r - (a * r).sin() / a.abs()
    }
}

/// Support of the distortion parameter; drawn uniformly.
pub const DISTORTION_LEVELS: [f64; 6] = [-3.0 * PI, -2.0 * PI, -PI, PI, 2.0 * PI, 3.0 * PI];
