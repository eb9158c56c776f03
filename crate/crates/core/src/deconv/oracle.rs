//! Independent evaluations of `H` used to cross-check the solver:
//!
//! * [`solve_direct_quadrature`] integrates `Ĥ = Ĵĝ/(1 − Ĵ)` directly in
//!   spherical coordinates (`d = 3`);
//! * [`neumann_series`] sums `H = Σ_{n≥1} J^{∗n} ∗ g` in closed form for
//!   mixtures whose covariances are integer multiples of one base matrix.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::radial::gaussian_radial_tail;
use super::DeconvProblem;
use crate::kernel::{DiagonalCovariance, GaussianMixtureKernel};
use crate::quadrature::{gauss_legendre, integrate_adaptive};
use crate::{Error, Result};

/// A reference value with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleValue {
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DirectQuadratureSettings {
    /// Relative target of the adaptive radial integral.
    pub rel_tol: f64,
    /// Neglected `|k| > K` mass relative to `|H(0)|`-scale quantities.
    pub cutoff_rel_tol: f64,
    pub max_panels: usize,
    /// Gauss–Legendre nodes per polar-angle panel.
    pub polar_nodes: usize,
}

impl Default for DirectQuadratureSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            cutoff_rel_tol: 1e-13,
            max_panels: 4000,
            polar_nodes: 12,
        }
    }
}

/// Orthonormal frame whose first vector is along `x` (or `e₁` for `x = 0`).
fn frame(x: &[f64]) -> [[f64; 3]; 3] {
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let a = if r > 0.0 {
        [x[0] / r, x[1] / r, x[2] / r]
    } else {
        [1.0, 0.0, 0.0]
    };
    // Gram–Schmidt against the axis least aligned with `a`.
    let pick = (0..3)
        .min_by(|&i, &j| a[i].abs().total_cmp(&a[j].abs()))
        .unwrap_or(0);
    let mut b = [0.0; 3];
    b[pick] = 1.0;
    let dot = a[pick];
    for i in 0..3 {
        b[i] -= dot * a[i];
    }
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    b.iter_mut().for_each(|v| *v /= nb);
    let c = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    [a, b, c]
}

/// Spread of covariance entries across all components of `J` and `g`;
/// controls how fast `Ĥ` varies over a sphere of radius `κ`.
fn anisotropy_spread(j: &GaussianMixtureKernel, g: &GaussianMixtureKernel) -> f64 {
    j.components()
        .iter()
        .chain(g.components())
        .map(|c| c.covariance.max_entry() - c.covariance.min_entry())
        .fold(0.0, f64::max)
}

struct AngularRule {
    polar: (Vec<f64>, Vec<f64>),
    /// Nodes needed to resolve the `1/(k·Σk)` profile near `k = 0`.
    infrared_nodes: f64,
}

impl AngularRule {
    /// `∫_{S²} Ĥ(κω) cos(κ r ω·x̂) dω` with `level` ∈ {1, 2} selecting the
    /// base or refined resolution.
    fn integrate(
        &self,
        h_hat: &(dyn Fn(&[f64]) -> f64 + Sync),
        basis: &[[f64; 3]; 3],
        kappa: f64,
        r: f64,
        spread: f64,
        level: usize,
    ) -> f64 {
        let stretch = kappa * kappa * spread;
        let u_panels =
            (1.0 + kappa * r / PI + stretch / 8.0).max(self.infrared_nodes / 8.0).ceil() as usize * level;
        let n_phi = (20.0 + stretch).max(self.infrared_nodes).ceil() as usize * level;
        let (gx, gw) = &self.polar;
        let mut total = 0.0;
        let mut k = [0.0; 3];
        // Polar angle θ ∈ [0, π/2] with u = cos θ keeps the integrand smooth
        // at the pole, where √(1 − u²) is not.
        for p in 0..u_panels {
            let lo = FRAC_PI_2 * p as f64 / u_panels as f64;
            let half = FRAC_PI_2 * 0.5 / u_panels as f64;
            for (xi, wi) in gx.iter().zip(gw) {
                let (s, u) = (lo + half * (xi + 1.0)).sin_cos();
                let mut ring = 0.0;
                for q in 0..n_phi {
                    let phi = 2.0 * PI * q as f64 / n_phi as f64;
                    let (sp, cp) = phi.sin_cos();
                    for (i, ki) in k.iter_mut().enumerate() {
                        *ki = kappa * (u * basis[0][i] + s * (cp * basis[1][i] + sp * basis[2][i]));
                    }
                    ring += h_hat(&k);
                }
                ring *= 2.0 * PI / n_phi as f64;
                total += half * wi * s * ring * (kappa * u * r).cos();
            }
        }
        // u ∈ [−1, 0] mirrors u ∈ [0, 1] by evenness of Ĥ.
        2.0 * total
    }
}

/// `H(x) = (2π)^{−3} ∫ Ĥ(k) cos(k·x) dk` by spherical-shell quadrature, for
/// Gaussian-mixture kernels in `d = 3`. Works in subcritical mode as well.
pub fn solve_direct_quadrature(
    problem: &DeconvProblem,
    points: &[Vec<f64>],
    settings: &DirectQuadratureSettings,
) -> Result<Vec<OracleValue>> {
    if problem.dim() != 3 {
        return Err(Error::Unsupported(format!(
            "direct quadrature is implemented for d = 3 only (got d = {})",
            problem.dim()
        )));
    }
    let (j, g) = match (problem.j().as_mixture(), problem.g().as_mixture()) {
        (Some(j), Some(g)) => (j, g),
        _ => {
            return Err(Error::Unsupported(
                "direct quadrature needs Gaussian-mixture kernels".into(),
            ))
        }
    };
    if let Some(p) = points.iter().find(|p| p.len() != 3) {
        return Err(Error::DimensionMismatch {
            expected: 3,
            got: p.len(),
        });
    }
    let gj = g.convolve(j)?;
    let floor = if problem.is_subcritical() {
        (1.0 - problem.j_hat0()) + problem.k_ir()
    } else {
        problem.k_ir()
    };
    // |Ĵĝ| ≤ Σ|w| exp(−s_min κ²/2); |1 − Ĵ| ≥ floor for |k| ≥ 1.
    let tail = |k: f64| -> f64 {
        gj.effective()
            .map(|(w, s)| w.abs() * gaussian_radial_tail(3, s.min_entry(), k))
            .sum::<f64>()
            * 4.0
            * PI
            / ((2.0 * PI).powi(3) * floor)
    };
    let scale = tail(0.0);
    let mut k_cut = 1.0;
    while tail(k_cut) > settings.cutoff_rel_tol * scale && k_cut < 1e3 {
        k_cut *= 1.1;
    }
    let truncation = tail(k_cut);
    let spread = anisotropy_spread(j, g);
    // On a circle, 1/(a cos²φ + b sin²φ) has Fourier coefficients decaying
    // like q^m with q = (√a − √b)/(√a + √b); resolve it to ~1e-14.
    let ratio = (problem.sigma().max_entry() / problem.sigma().min_entry()).sqrt();
    let q = (ratio - 1.0) / (ratio + 1.0);
    let infrared_nodes = if q > 0.0 { 2.0 * 33.0 / -q.ln() } else { 0.0 };
    let rule = AngularRule {
        polar: gauss_legendre(settings.polar_nodes),
        infrared_nodes,
    };
    let h_hat = |k: &[f64]| problem.h_hat(k).unwrap_or(f64::NAN);
    let norm = (2.0 * PI).powi(-3);

    points
        .par_iter()
        .map(|x| {
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let basis = frame(x);
            let shell =
                |kappa: f64| kappa * kappa * rule.integrate(&h_hat, &basis, kappa, r, spread, 1);
            let panels = ((k_cut * r / PI).ceil() as usize).max(32);
            let mut breaks = vec![0.0, 0.05, 0.2];
            breaks.extend((1..=panels).map(|i| 0.5 + (k_cut - 0.5) * i as f64 / panels as f64));
            let radial = integrate_adaptive(shell, &breaks, 0.0, settings.rel_tol, settings.max_panels);
            if !radial.value.is_finite() {
                return Err(Error::SingularDenominator(f64::NAN));
            }
            if !radial.converged {
                return Err(Error::QuadratureNonConvergence {
                    achieved: radial.error,
                    requested: settings.rel_tol * radial.value.abs(),
                });
            }
            // Angular resolution check at sample shells, integrated crudely.
            let samples = 24;
            let angular: f64 = (0..samples)
                .map(|i| {
                    // Quadratic spacing samples the anisotropic infrared region.
                    let t = (i as f64 + 0.5) / samples as f64;
                    let kappa = k_cut * t * t;
                    let width = 2.0 * k_cut * t / samples as f64;
                    let coarse = rule.integrate(&h_hat, &basis, kappa, r, spread, 1);
                    let fine = rule.integrate(&h_hat, &basis, kappa, r, spread, 2);
                    kappa * kappa * (coarse - fine).abs() * width
                })
                .sum::<f64>();
            let rounding = 64.0 * f64::EPSILON * radial.magnitude;
            Ok(OracleValue {
                value: norm * radial.value,
                error: norm * (radial.error + angular + rounding) + truncation,
            })
        })
        .collect()
}

/// `J` as weights on integer multiples `u·B` of one base covariance `B`.
struct CommensurateKernel {
    base: DiagonalCovariance,
    steps: Vec<(f64, usize)>,
}

impl CommensurateKernel {
    fn new(j: &GaussianMixtureKernel) -> Result<Self> {
        let unsupported = || {
            Error::Unsupported(
                "the series oracle needs J's covariances to be integer multiples of one base covariance"
                    .into(),
            )
        };
        let (shape, factors) = j.common_shape().ok_or_else(unsupported)?;
        let smallest = factors.iter().copied().fold(f64::INFINITY, f64::min);
        for q in 1..=8 {
            let unit = smallest / q as f64;
            let steps: Option<Vec<(f64, usize)>> = j
                .effective()
                .zip(&factors)
                .map(|((w, _), f)| {
                    let u = (f / unit).round();
                    ((f / unit - u).abs() < 1e-9 * u.max(1.0) && (1.0..=64.0).contains(&u))
                        .then_some((w, u as usize))
                })
                .collect();
            if let Some(steps) = steps {
                return Ok(Self {
                    base: shape.scaled(unit),
                    steps,
                });
            }
        }
        Err(unsupported())
    }

    /// Renewal weights `V_s` for `s = 0..=n`: `V_0 = 1`, `V_s = Σ wᵢ V_{s−uᵢ}`.
    fn renewal(&self, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n + 1];
        v[0] = 1.0;
        for s in 1..=n {
            v[s] = self
                .steps
                .iter()
                .filter(|(_, u)| *u <= s)
                .map(|(w, u)| w * v[s - u])
                .sum();
        }
        v
    }

    /// `lim V_s`: `1/Σ wᵢuᵢ` at criticality, 0 below it.
    fn renewal_limit(&self) -> f64 {
        let mass: f64 = self.steps.iter().map(|(w, _)| w).sum();
        if mass < 1.0 - 1e-9 {
            0.0
        } else {
            1.0 / self.steps.iter().map(|(w, u)| w * *u as f64).sum::<f64>()
        }
    }
}

/// `Σ_g w N(0, sB + S_g)(x)` for real `s > 0`.
fn smeared_source(g: &GaussianMixtureKernel, base: &DiagonalCovariance, s: f64, x: &[f64]) -> f64 {
    let d = x.len() as f64;
    g.effective()
        .map(|(w, cov)| {
            let c = base.scaled(s).sum(cov);
            w * (-0.5 * c.inverse_quadratic_form(x)).exp()
                / ((2.0 * PI).powf(d / 2.0) * c.determinant().sqrt())
        })
        .sum()
}

/// `H(x) = Σ_{s≥1} V_s (N(0, sB) ∗ g)(x)`, summed explicitly to a cutoff `N`
/// and continued by `V_∞ ∫_{N+½}^∞` beyond it.
pub fn neumann_series(problem: &DeconvProblem, points: &[Vec<f64>]) -> Result<Vec<OracleValue>> {
    let (j, g) = match (problem.j().as_mixture(), problem.g().as_mixture()) {
        (Some(j), Some(g)) => (j, g),
        _ => {
            return Err(Error::Unsupported(
                "the series oracle needs Gaussian-mixture kernels".into(),
            ))
        }
    };
    let d = problem.dim();
    if let Some(p) = points.iter().find(|p| p.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: p.len(),
        });
    }
    let walk = CommensurateKernel::new(j)?;
    let v_inf = walk.renewal_limit();
    let q_max = points
        .iter()
        .map(|x| walk.base.inverse_quadratic_form(x))
        .fold(0.0, f64::max);
    // The summand peaks near s ≈ q/d; go well beyond it.
    let n = ((20.0 * q_max / d as f64).ceil() as usize).max(2000);
    let v = walk.renewal(4 * n);
    let settle = v[n + 1..]
        .iter()
        .map(|vs| (vs - v_inf).abs())
        .fold(0.0, f64::max);
    if !settle.is_finite() || settle > 1e-6 * v_inf.max(1.0) {
        return Err(Error::Unsupported(format!(
            "renewal weights do not settle (|V_s − V_∞| = {settle:.3e} beyond s = {n})"
        )));
    }
    let base = walk.base.clone();

    Ok(points
        .par_iter()
        .map(|x| {
            let h = |s: f64| smeared_source(g, &base, s, x);
            let mut sum = 0.0;
            let mut comp = 0.0;
            let mut magnitude = 0.0;
            for (s, vs) in v.iter().enumerate().take(n + 1).skip(1) {
                let term = vs * h(s as f64);
                magnitude += term.abs();
                // Neumaier compensation.
                let t = sum + term;
                comp += if sum.abs() >= term.abs() {
                    (sum - t) + term
                } else {
                    (term - t) + sum
                };
                sum = t;
            }
            let lower = n as f64 + 0.5;
            // s = 1/u² maps [lower, ∞) to (0, lower^{−1/2}]; ds = 2/u³ du.
            let tail_integrand = |u: f64| {
                if u <= 0.0 {
                    0.0
                } else {
                    h(1.0 / (u * u)) * 2.0 / (u * u * u)
                }
            };
            let u_max = lower.powf(-0.5);
            let breaks: Vec<f64> = (0..=16).map(|i| u_max * i as f64 / 16.0).collect();
            let tail = integrate_adaptive(tail_integrand, &breaks, 0.0, 1e-12, 2000);
            let tail_sum = tail.value.abs();
            // Σ_{s>N} h(s) = ∫_{N+½}^∞ h + h′(N+½)/24 − 7h‴(N+½)/5760 + …;
            // the first correction is applied, the second bounds the error.
            let nf = n as f64;
            let slope = h(nf + 1.0) - h(nf);
            let curvature = (h(nf + 2.0) - 3.0 * h(nf + 1.0) + 3.0 * h(nf) - h(nf - 1.0)).abs();
            let midpoint = slope / 24.0;
            let next = 7.0 * curvature / 5760.0 + (slope / nf).abs() / 24.0;
            let value = sum + comp + v_inf * (tail.value + midpoint);
            let error = v_inf * (tail.error + next)
                + settle * (tail_sum + midpoint.abs())
                + 16.0 * f64::EPSILON * magnitude;
            OracleValue { value, error }
        })
        .collect())
}
