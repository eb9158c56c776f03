//! Special functions used across the crate.

use std::f64::consts::PI;

pub use statrs::function::erf::erfc;
pub use statrs::function::gamma::{gamma, ln_gamma};

/// Leading amplitude `a_d = Γ((d−2)/2) / (2π^{d/2})` of the Newtonian potential in ℝᵈ.
pub fn newtonian_constant(d: usize) -> f64 {
    let d = d as f64;
    gamma((d - 2.0) / 2.0) / (2.0 * PI.powf(d / 2.0))
}

/// Surface area of the unit sphere `S^{d−1}`.
pub fn sphere_area(d: usize) -> f64 {
    let d = d as f64;
    2.0 * PI.powf(d / 2.0) / gamma(d / 2.0)
}

/// Angular average of `exp(i t ω·e)` over the unit sphere `S^{d−1}`:
/// `Λ_d(t) = Γ(d/2) (2/t)^{d/2−1} J_{d/2−1}(t)`, with `Λ_d(0) = 1`.
///
/// A radial function `h(|x|)` then has Fourier transform
/// `ĥ(k) = |S^{d−1}| ∫ h(r) r^{d−1} Λ_d(|k| r) dr`.
pub fn radial_fourier_factor(d: usize, t: f64) -> f64 {
    let t = t.abs();
    let nu = d as f64 / 2.0 - 1.0;
    if t < nu + 1.0 {
        return small_argument_series(d, t);
    }
    if d % 2 == 1 {
        // Λ_{2n+3}(t) = (2n+1)!! j_n(t) / t^n
        let n = (d - 3) / 2;
        let j = spherical_bessel(n, t);
        let dfact: f64 = (1..=n).map(|l| (2 * l + 1) as f64).product();
        dfact * j / t.powi(n as i32)
    } else {
        let n = (d - 2) / 2;
        gamma(d as f64 / 2.0) * (2.0 / t).powi(n as i32) * bessel_j_integer(n, t)
    }
}

fn small_argument_series(d: usize, t: f64) -> f64 {
    let half_d = d as f64 / 2.0;
    let q = (t / 2.0) * (t / 2.0);
    let mut term = 1.0;
    let mut sum = 1.0;
    for m in 0..200 {
        let m = m as f64;
        term *= -q / ((m + 1.0) * (m + half_d));
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

/// Spherical Bessel `j_n(t)` by upward recurrence; stable for `t >= n`.
fn spherical_bessel(n: usize, t: f64) -> f64 {
    let (s, c) = t.sin_cos();
    let j0 = s / t;
    if n == 0 {
        return j0;
    }
    let mut prev = j0;
    let mut cur = s / (t * t) - c / t;
    for l in 1..n {
        let next = (2 * l + 1) as f64 / t * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Integer-order Bessel `J_n(t)` from the periodic integral
/// `J_n(t) = (1/2π)∫₀^{2π} cos(nτ − t sin τ) dτ`, summed with the trapezoid
/// rule, which converges geometrically once the node count exceeds `t + n`.
pub fn bessel_j_integer(n: usize, t: f64) -> f64 {
    let nodes = (1.3 * t.abs() + n as f64 + 32.0).ceil() as usize;
    let nf = n as f64;
    let step = 2.0 * PI / nodes as f64;
    let sum: f64 = (0..nodes)
        .map(|j| {
            let tau = step * j as f64;
            (nf * tau - t * tau.sin()).cos()
        })
        .sum();
    sum / nodes as f64
}
