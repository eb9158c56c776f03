//! Hankel-transform engine for problems whose kernels all share one diagonal
//! shape `S`: then `f̂(k) = F(√(k·Sk))` and
//!
//! `f(x) = (det S)^{−1/2} (2π)^{−d} |S^{d−1}| ∫₀^∞ F(κ) κ^{d−1} Λ_d(κρ) dκ`,
//! `ρ = √(x·S⁻¹x)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use super::{DeconvProblem, RemainderValue, RemainderValues};
use crate::quadrature::integrate_adaptive;
use crate::special::{gamma, radial_fourier_factor, sphere_area};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadialSettings {
    /// Absolute quadrature target as a fraction of `∫|F|κ^{d−1}`.
    pub rel_tol: f64,
    /// Neglected tail beyond the cutoff as a fraction of the majorant integral.
    pub truncation_rel_tol: f64,
    pub max_panels: usize,
}

impl Default for RadialSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-13,
            truncation_rel_tol: 1e-17,
            max_panels: 40_000,
        }
    }
}

/// `∫_K^∞ κ^{d−1} e^{−cκ²/2} dκ = ½ (2/c)^{d/2} Γ(d/2, cK²/2)`.
pub(super) fn gaussian_radial_tail(d: usize, c: f64, k: f64) -> f64 {
    let h = d as f64 / 2.0;
    let x = c * k * k / 2.0;
    let upper = if x > 0.0 { gamma_ur(h, x) } else { 1.0 };
    0.5 * (2.0 / c).powf(h) * gamma(h) * upper
}

/// Cutoff `K ≥ 1` and the bound on `∫_K^∞ |F| κ^{d−1} dκ`.
fn cutoff(problem: &DeconvProblem, f: &dyn Fn(f64) -> f64, settings: &RadialSettings) -> (f64, f64) {
    let d = problem.dim();
    if let Some(maj) = problem.numerator_majorant() {
        // Components are multiples of the shape S (S₁₁ = 1), so along e₁ the
        // decay rate of each is its first covariance entry.
        let floor = problem.denominator_floor();
        let tail = |k: f64| -> f64 {
            maj.iter()
                .map(|(w, s)| w * gaussian_radial_tail(d, s.entries()[0], k))
                .sum::<f64>()
                / floor
        };
        let target = settings.truncation_rel_tol * tail(0.0);
        let mut k = 1.0;
        while tail(k) > target && k < 1e4 {
            k *= 1.25;
        }
        return (k, tail(k));
    }
    // Generic kernels: walk outwards until the integrand is negligible.
    let integrand = |k: f64| (f(k) * k.powi(d as i32 - 1)).abs();
    let mut peak: f64 = 0.0;
    let mut k = 0.5;
    loop {
        k *= 1.25;
        let v = integrand(k);
        peak = peak.max(v);
        if (v < 1e-15 * peak && k > 4.0) || k > 2e3 {
            return (k, v * k);
        }
    }
}

pub(crate) fn evaluate(problem: &DeconvProblem, points: &[Vec<f64>]) -> Result<RemainderValues> {
    let shape = problem.common_shape().ok_or_else(|| {
        Error::Unsupported("the radial engine needs all components to share one diagonal shape".into())
    })?;
    let d = problem.dim();
    let settings = &problem.settings().radial;
    let mut k = vec![0.0; d];
    let spectral = |kappa: f64| -> f64 {
        let mut k = vec![0.0; d];
        k[0] = kappa;
        problem.remainder_hat(&k).unwrap_or(f64::NAN)
    };
    k[0] = 1.0;
    problem.remainder_hat(&k)?;

    let (k_cut, tail) = cutoff(problem, &spectral, settings);
    let dm1 = d as i32 - 1;
    let mut near_zero = vec![0.0, 1e-3, 1e-2, 1e-1];
    near_zero.retain(|&b| b < k_cut);
    let base_breaks: Vec<f64> = near_zero
        .iter()
        .copied()
        .chain((1..=64).map(|i| 0.1 + (k_cut - 0.1) * i as f64 / 64.0))
        .collect();
    let magnitude = integrate_adaptive(
        |kappa| (spectral(kappa) * kappa.powi(dm1)).abs(),
        &base_breaks,
        0.0,
        1e-10,
        settings.max_panels,
    );
    if !magnitude.value.is_finite() {
        return Err(Error::SingularDenominator(f64::NAN));
    }
    let prefactor =
        sphere_area(d) / ((2.0 * std::f64::consts::PI).powi(d as i32) * shape.determinant().sqrt());
    let abs_tol = settings.rel_tol * magnitude.value;

    let values: Vec<Result<(RemainderValue, bool)>> = points
        .par_iter()
        .map(|x| {
            let rho = shape.inverse_quadratic_form(x).sqrt();
            let mut breaks = near_zero.clone();
            let period = if rho > 0.0 {
                std::f64::consts::PI / rho
            } else {
                k_cut
            };
            let panels = ((k_cut / period).ceil() as usize).clamp(64, settings.max_panels / 4);
            breaks.extend((1..=panels).map(|i| 0.1 + (k_cut - 0.1) * i as f64 / panels as f64));
            let integral = integrate_adaptive(
                |kappa| spectral(kappa) * kappa.powi(dm1) * radial_fourier_factor(d, kappa * rho),
                &breaks,
                abs_tol,
                0.0,
                settings.max_panels,
            );
            if !integral.value.is_finite() {
                return Err(Error::SingularDenominator(f64::NAN));
            }
            let rounding = 64.0 * f64::EPSILON * integral.magnitude;
            Ok((
                RemainderValue {
                    value: prefactor * integral.value,
                    quadrature: prefactor * (integral.error + rounding),
                    discretization: 0.0,
                    truncation: prefactor * tail,
                    aliased: false,
                },
                integral.converged,
            ))
        })
        .collect();
    let mut out = RemainderValues::default();
    let mut unconverged = 0;
    for v in values {
        let (value, converged) = v?;
        if !converged {
            unconverged += 1;
        }
        out.values.push(value);
    }
    out.notes.push(format!(
        "radial engine: shape {:?}, cutoff K = {k_cut:.4}, truncation bound {:.3e}",
        shape.entries(),
        prefactor * tail
    ));
    if unconverged > 0 {
        out.notes.push(format!(
            "radial engine: {unconverged} point(s) did not reach the quadrature tolerance"
        ));
    }
    Ok(out)
}
