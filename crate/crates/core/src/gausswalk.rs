//! The Gaussian random walk with step covariance `Σ`.
//!
//! Since `D^{*n} = N(0, nΣ)`, the walk two-point function without its zeroth
//! and first step is the scalar series
//!
//! `C(x) = (2π)^{−d/2} (det Σ)^{−1/2} Σ_{n≥2} n^{−d/2} exp(−q/2n)`, `q = x·Σ⁻¹x`,
//!
//! which is summed here explicitly up to a cutoff `N` and completed with an
//! Euler–Maclaurin tail whose remainder is bounded rigorously.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::kernel::DiagonalCovariance;
use crate::quadrature::integrate_adaptive;
use crate::special::{newtonian_constant, sphere_area};
use crate::{Error, Result};

/// Hard cap on the number of explicitly summed terms.
pub const MAX_TERMS: u64 = 100_000_000;

/// Smallest explicit cutoff; keeps the Euler–Maclaurin corrections tiny.
const MIN_CUTOFF: u64 = 64;

/// `2ζ(4)/(2π)⁴`: the Euler–Maclaurin remainder constant at order four.
const EM_REMAINDER_CONSTANT: f64 = 2.0 * 1.082_323_233_711_138_2 / 1558.545_456_544_039_6;

fn require_dim(sigma: &DiagonalCovariance) -> Result<usize> {
    match sigma.dim() {
        d if d < 3 => Err(Error::DimensionTooSmall(d)),
        d => Ok(d),
    }
}

fn check_point(sigma: &DiagonalCovariance, x: &[f64]) -> Result<()> {
    if x.len() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            expected: sigma.dim(),
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument {
            name: "x",
            reason: "coordinates must be finite".into(),
        });
    }
    Ok(())
}

/// `(2π)^{−d/2} (det Σ)^{−1/2}`.
fn gaussian_normalization(sigma: &DiagonalCovariance) -> f64 {
    (2.0 * PI).powf(-(sigma.dim() as f64) / 2.0) / sigma.determinant().sqrt()
}

/// Density of `N(0, Σ)` at `x`.
pub fn step_density(sigma: &DiagonalCovariance, x: &[f64]) -> Result<f64> {
    require_dim(sigma)?;
    check_point(sigma, x)?;
    Ok(gaussian_normalization(sigma) * (-0.5 * sigma.inverse_quadratic_form(x)).exp())
}

/// A truncated walk series together with a rigorous bound on its error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesValue {
    pub value: f64,
    /// Bound on `|value − exact|`: Euler–Maclaurin remainder plus rounding.
    pub tail_bound: f64,
    /// Number of explicitly summed terms' upper index (exclusive).
    pub cutoff: u64,
}

/// Walk two-point function for a fixed step covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkTwoPoint {
    sigma: DiagonalCovariance,
    first_step: u64,
    rel_tol: f64,
}

impl WalkTwoPoint {
    /// `C = Σ_{n≥2} D^{*n}`.
    pub fn new(sigma: DiagonalCovariance, rel_tol: f64) -> Result<Self> {
        Self::with_first_step(sigma, 2, rel_tol)
    }

    /// `Σ_{n≥first} D^{*n}`; `first = 1` gives `D + C`.
    pub fn with_first_step(sigma: DiagonalCovariance, first_step: u64, rel_tol: f64) -> Result<Self> {
        require_dim(&sigma)?;
        if first_step == 0 {
            return Err(Error::InvalidArgument {
                name: "first_step",
                reason: "the n = 0 term is a delta and cannot be evaluated pointwise".into(),
            });
        }
        if !(rel_tol.is_finite() && rel_tol > 0.0) {
            return Err(Error::InvalidArgument {
                name: "rel_tol",
                reason: format!("{rel_tol} must be finite and > 0"),
            });
        }
        Ok(Self {
            sigma,
            first_step,
            rel_tol,
        })
    }

    pub fn sigma(&self) -> &DiagonalCovariance {
        &self.sigma
    }

    pub fn dim(&self) -> usize {
        self.sigma.dim()
    }

    /// Evaluate at `x`, growing the cutoff until the tail bound meets `rel_tol`.
    pub fn evaluate(&self, x: &[f64]) -> Result<SeriesValue> {
        check_point(&self.sigma, x)?;
        let q = self.sigma.inverse_quadratic_form(x);
        self.evaluate_quadratic_form(q)
    }

    /// Evaluate as a function of `q = x·Σ⁻¹x`.
    pub fn evaluate_quadratic_form(&self, q: f64) -> Result<SeriesValue> {
        let d = self.dim();
        let mut cutoff = minimal_cutoff(d, q, self.first_step);
        loop {
            let v = self.evaluate_with_cutoff_q(q, cutoff);
            if v.tail_bound <= self.rel_tol * v.value {
                return Ok(v);
            }
            if cutoff >= MAX_TERMS {
                return Err(Error::SeriesTolerance {
                    requested: self.rel_tol,
                    achieved: v.tail_bound / v.value,
                    max_terms: MAX_TERMS,
                });
            }
            cutoff = (2 * cutoff).min(MAX_TERMS);
        }
    }

    /// Evaluate with a prescribed explicit cutoff (raised to the minimum needed
    /// for the tail bound to be valid).
    pub fn evaluate_with_cutoff(&self, x: &[f64], cutoff: u64) -> Result<SeriesValue> {
        check_point(&self.sigma, x)?;
        let q = self.sigma.inverse_quadratic_form(x);
        Ok(self.evaluate_with_cutoff_q(q, cutoff))
    }

    fn evaluate_with_cutoff_q(&self, q: f64, cutoff: u64) -> SeriesValue {
        let d = self.dim();
        let cutoff = cutoff.max(minimal_cutoff(d, q, self.first_step));
        let (sum, tail, remainder) = reduced_series(d, q, self.first_step, cutoff);
        let a = gaussian_normalization(&self.sigma);
        let value = a * (sum + tail);
        let rounding = 16.0 * f64::EPSILON * value;
        SeriesValue {
            value,
            tail_bound: a * remainder + rounding,
            cutoff,
        }
    }

    /// Batch evaluation, parallel over points; output order follows input.
    pub fn evaluate_many(&self, points: &[Vec<f64>]) -> Result<Vec<SeriesValue>> {
        points.par_iter().map(|x| self.evaluate(x)).collect()
    }
}

/// Smallest cutoff for which the fourth derivative of `t^{−m}e^{−c/t}` keeps
/// one sign on `[N, ∞)`, so the remainder integral equals `|f'''(N)|`.
fn minimal_cutoff(d: usize, q: f64, first: u64) -> u64 {
    let m = d as f64 / 2.0;
    let c = q / 2.0;
    let sign_stable = 2.0 * c * (m + 4.0) / m;
    let n = sign_stable.max(8.0 * c).ceil();
    if n >= MAX_TERMS as f64 {
        MAX_TERMS
    } else {
        (n as u64).max(MIN_CUTOFF).max(first + 1)
    }
}

/// Returns `(Σ_{first ≤ n < N} f(n), EM tail estimate of Σ_{n ≥ N} f(n), remainder bound)`
/// for `f(t) = t^{−d/2} e^{−q/(2t)}`.
fn reduced_series(d: usize, q: f64, first: u64, cutoff: u64) -> (f64, f64, f64) {
    let m = d as f64 / 2.0;
    let c = q / 2.0;
    let term = |n: u64| -> f64 {
        let t = n as f64;
        (-m * t.ln() - c / t).exp()
    };

    // Sum from the mode outward: below the mode terms shrink towards n = first
    // and are dropped once negligible; above it every term up to the cutoff is kept.
    let mode = ((c / m).round() as u64).clamp(first, cutoff - 1);
    let mut acc = NeumaierSum::default();
    for n in mode..cutoff {
        acc.add(term(n));
    }
    for n in (first..mode).rev() {
        let t = term(n);
        acc.add(t);
        if t < 1e-20 * acc.value() {
            break;
        }
    }

    let nf = cutoff as f64;
    let f = term(cutoff);
    let g1 = -m / nf + c / (nf * nf);
    let g1p = m / (nf * nf) - 2.0 * c / nf.powi(3);
    let g1pp = -2.0 * m / nf.powi(3) + 6.0 * c / nf.powi(4);
    let f1 = f * g1;
    let f3 = f * (g1.powi(3) + 3.0 * g1 * g1p + g1pp);
    let tail = tail_integral(m, c, nf) + 0.5 * f - f1 / 12.0 + f3 / 720.0;
    let remainder = EM_REMAINDER_CONSTANT * f3.abs();
    (acc.value(), tail, remainder)
}

/// `∫_N^∞ t^{−m} e^{−c/t} dt = N^{−s} Σ_k (−z)^k / (k!(s+k))`, `s = m − 1`, `z = c/N`.
fn tail_integral(m: f64, c: f64, n: f64) -> f64 {
    let s = m - 1.0;
    let z = c / n;
    let mut power = 1.0;
    let mut sum = 1.0 / s;
    for k in 1..200 {
        power *= -z / k as f64;
        let t = power / (s + k as f64);
        sum += t;
        if t.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    n.powf(-s) * sum
}

#[derive(Debug, Default, Clone, Copy)]
struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// `C(x)` for the walk with step covariance `Σ`, returned with its error bound.
pub fn walk_c(sigma: &DiagonalCovariance, x: &[f64], rel_tol: f64) -> Result<SeriesValue> {
    WalkTwoPoint::new(sigma.clone(), rel_tol)?.evaluate(x)
}

/// `D(x) + C(x) = Σ_{n≥1} D^{*n}(x)`.
pub fn walk_c_with_first_step(
    sigma: &DiagonalCovariance,
    x: &[f64],
    rel_tol: f64,
) -> Result<SeriesValue> {
    WalkTwoPoint::with_first_step(sigma.clone(), 1, rel_tol)?.evaluate(x)
}

/// Leading large-`x` form `a_d (det Σ)^{−1/2} (x·Σ⁻¹x)^{−(d−2)/2}`.
pub fn walk_c_asymptotic(sigma: &DiagonalCovariance, x: &[f64]) -> Result<f64> {
    let d = require_dim(sigma)?;
    check_point(sigma, x)?;
    let q = sigma.inverse_quadratic_form(x);
    if q == 0.0 {
        return Err(Error::InvalidArgument {
            name: "x",
            reason: "the asymptotic form is singular at the origin".into(),
        });
    }
    Ok(asymptotic_amplitude(sigma) * q.powf(-(d as f64 - 2.0) / 2.0))
}

/// `a_d / √det Σ`.
pub fn asymptotic_amplitude(sigma: &DiagonalCovariance) -> f64 {
    newtonian_constant(sigma.dim()) / sigma.determinant().sqrt()
}

/// Outcome of the recurrence self-test `C = D∗D + D∗C`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecurrenceResidual {
    pub residual: f64,
    pub c_value: f64,
    /// Series tail bound at `x` plus the quadrature error estimate of `D∗C`.
    pub error_bound: f64,
}

/// Evaluate `|C(x) − D^{*2}(x) − (D∗C)(x)|`, computing `D∗C` by quadrature in
/// whitened spherical coordinates centred at the singularity of `C`.
pub fn walk_c_recurrence_residual(
    sigma: &DiagonalCovariance,
    x: &[f64],
    series_rel_tol: f64,
    quadrature_rel_tol: f64,
) -> Result<RecurrenceResidual> {
    let d = require_dim(sigma)?;
    check_point(sigma, x)?;
    let walk = WalkTwoPoint::new(sigma.clone(), series_rel_tol)?;
    let c = walk.evaluate(x)?;
    let q = sigma.inverse_quadratic_form(x);
    let two_step = step_density(&sigma.scaled(2.0), x)?;

    // y = Σ^{1/2} z, u = Σ^{−1/2} x:  (D∗C)(x) = (2π)^{−d/2} ∫ e^{−|u−z|²/2} C̃(|z|) dz,
    // with C̃(ρ) the series at quadratic form ρ².
    let u = q.sqrt();
    let df = d as f64;
    let ring = sphere_area(d - 1);
    let angular = |r: f64| -> f64 {
        // ∫₀^π exp(−(u − r)²/2 − r u (1 − cos θ)) sin^{d−2}θ dθ
        let base = -0.5 * (u - r) * (u - r);
        let b = r * u;
        let breaks: Vec<f64> = (0..=8).map(|i| PI * i as f64 / 8.0).collect();
        integrate_adaptive(
            |theta: f64| (base - b * (1.0 - theta.cos())).exp() * theta.sin().powf(df - 2.0),
            &breaks,
            1e-300,
            1e-13,
            2000,
        )
        .value
    };
    let integrand = |r: f64| -> f64 {
        if r == 0.0 && d == 3 {
            // r² · C̃(r) → 0 in every d ≥ 3, still finite at the left end.
            return 0.0;
        }
        let ct = walk
            .evaluate_quadratic_form(r * r)
            .map(|v| v.value)
            .unwrap_or(f64::NAN);
        ring * r.powf(df - 1.0) * ct * angular(r)
    };
    let lo = (u - 14.0).max(0.0);
    let hi = u + 14.0;
    let mut breaks: Vec<f64> = (0..=16).map(|i| lo + (hi - lo) * i as f64 / 16.0).collect();
    if u > lo && u < hi {
        breaks.push(u);
        breaks.sort_by(f64::total_cmp);
    }
    let integral = integrate_adaptive(integrand, &breaks, 0.0, quadrature_rel_tol, 4000);
    if !integral.value.is_finite() {
        return Err(Error::QuadratureNonConvergence {
            achieved: f64::INFINITY,
            requested: quadrature_rel_tol,
        });
    }
    let d_conv_c = (2.0 * PI).powf(-df / 2.0) * integral.value;
    let d_conv_c_err = (2.0 * PI).powf(-df / 2.0) * integral.error;
    let residual = (c.value - two_step - d_conv_c).abs();
    Ok(RecurrenceResidual {
        residual,
        c_value: c.value,
        error_bound: 2.0 * c.tail_bound + d_conv_c_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ZETA_5_2: f64 = 1.341_487_257_250_917_2;

    fn id(d: usize) -> DiagonalCovariance {
        DiagonalCovariance::identity(d)
    }

    #[test]
    fn step_density_normalizations() {
        let v = step_density(&id(3), &[0.0; 3]).unwrap();
        assert!((v - (2.0 * PI).powf(-1.5)).abs() < 1e-17);
        let v = step_density(&DiagonalCovariance::scaled_identity(5, 2.0), &[0.0; 5]).unwrap();
        assert!((v - (4.0 * PI).powf(-2.5)).abs() < 1e-17);
        let s2 = DiagonalCovariance::new(vec![1.0, 4.0]).unwrap();
        assert_eq!(step_density(&s2, &[0.0, 0.0]), Err(Error::DimensionTooSmall(2)));
    }

    #[test]
    fn origin_value_is_shifted_zeta() {
        let v = walk_c(&id(5), &[0.0; 5], 1e-13).unwrap();
        let expected = (2.0 * PI).powf(-2.5) * (ZETA_5_2 - 1.0);
        assert!(((v.value - expected) / expected).abs() < 1e-12, "{v:?}");
        // high-precision reference (2π)^{-5/2}(ζ(5/2) − 1)
        assert!((v.value - 3.450_840_064_082_881_7e-3).abs() < 1e-16);
        // the commonly quoted four-digit value 3.4505e-3 is within 1e-4 relative
        assert!(((v.value - 3.4505e-3) / v.value).abs() < 1e-4);
    }

    #[test]
    fn d3_leading_term_at_distance_ten() {
        let v = walk_c(&id(3), &[10.0, 0.0, 0.0], 1e-12).unwrap();
        let lead = 1.0 / (2.0 * PI * 10.0);
        assert!(((v.value - lead) / lead).abs() < 0.02);
    }

    #[test]
    fn even_and_positive() {
        let s = DiagonalCovariance::new(vec![1.0, 0.5, 3.0, 2.0]).unwrap();
        let x = [1.3, -0.2, 4.0, -7.0];
        let mx = [-1.3, 0.2, -4.0, 7.0];
        let a = walk_c(&s, &x, 1e-12).unwrap();
        let b = walk_c(&s, &mx, 1e-12).unwrap();
        assert_eq!(a.value, b.value);
        assert!(a.value > 0.0);
    }

    #[test]
    fn asymptotic_constants_and_ratio() {
        assert!((newtonian_constant(3) - 0.159_154_9).abs() < 1e-7);
        assert!((newtonian_constant(4) - 0.050_660_6).abs() < 1e-7);
        let s = DiagonalCovariance::new(vec![1.0, 1.0, 1.0, 1.0, 4.0]).unwrap();
        let r = 7.0;
        let e1 = walk_c_asymptotic(&s, &[r, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let e5 = walk_c_asymptotic(&s, &[0.0, 0.0, 0.0, 0.0, r]).unwrap();
        assert!((e5 / e1 - 8.0).abs() < 1e-12);
        assert!(walk_c_asymptotic(&s, &[0.0; 5]).is_err());
    }

    #[test]
    fn tail_integral_matches_quadrature() {
        for &(m, c, n) in &[(1.5, 0.0, 64.0), (2.5, 10.0, 100.0), (3.0, 300.0, 2400.0)] {
            let closed = tail_integral(m, c, n);
            // ∫_N^∞ t^{−m}e^{−c/t} dt = ∫_0^{1/N} u^{m−2} e^{−cu} du
            let quad = integrate_adaptive(
                |u: f64| u.powf(m - 2.0) * (-c * u).exp(),
                &[0.0, 1.0 / n],
                0.0,
                1e-14,
                2000,
            );
            assert!(((closed - quad.value) / closed).abs() < 1e-11);
        }
    }

    #[test]
    fn direct_summation_cross_check() {
        // brute force to 4·10⁶ with the crude integral tail (m−1)^{-1}N^{1−m}
        let d = 5;
        let q: f64 = 9.0;
        let brute: f64 = (2..4_000_000u64)
            .map(|n| {
                let t = n as f64;
                t.powf(-2.5) * (-q / (2.0 * t)).exp()
            })
            .sum::<f64>()
            + (4.0e6f64).powf(-1.5) / 1.5;
        let v = walk_c(&id(d), &[3.0, 0.0, 0.0, 0.0, 0.0], 1e-13).unwrap();
        let a = (2.0 * PI).powf(-2.5);
        assert!(((v.value - a * brute) / v.value).abs() < 1e-9);
    }

    #[test]
    fn recurrence_holds() {
        let r = walk_c_recurrence_residual(&id(3), &[0.0; 3], 1e-12, 1e-9).unwrap();
        assert!(r.residual <= 1e-4 * r.c_value, "{r:?}");
        let r = walk_c_recurrence_residual(&id(5), &[3.0, 0.0, 0.0, 0.0, 0.0], 1e-12, 1e-9).unwrap();
        assert!(r.residual <= 1e-3 * r.c_value, "{r:?}");
        let s = DiagonalCovariance::new(vec![0.5, 1.0, 2.0]).unwrap();
        let r = walk_c_recurrence_residual(&s, &[1.0, -1.0, 2.0], 1e-12, 1e-9).unwrap();
        assert!(r.residual <= 1e-6 * r.c_value, "{r:?}");
    }

    #[test]
    fn loose_tolerance_residual_within_bounds() {
        let r = walk_c_recurrence_residual(&id(3), &[1.0, 0.0, 0.0], 1.0, 1e-9).unwrap();
        assert!(r.residual <= r.error_bound + 1e-8 * r.c_value, "{r:?}");
    }

    #[test]
    fn unreachable_tolerance_is_reported() {
        let err = walk_c(&id(3), &[0.0; 3], 1e-40).unwrap_err();
        assert!(matches!(err, Error::SeriesTolerance { .. }));
    }

    #[test]
    fn step_density_absorbed_into_error_term() {
        let s = DiagonalCovariance::new(vec![1.0, 2.0, 1.0, 1.0, 4.0]).unwrap();
        let mut last = f64::INFINITY;
        for r in [10.0, 20.0, 40.0] {
            let x = [r / 2.0, r / 2.0, r / 2.0, r / 2.0, 0.0];
            let v = step_density(&s, &x).unwrap() * r.powi(7);
            assert!(v < last);
            last = v;
        }
        assert!(last < 1e-100);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn doubling_cutoff_stays_within_tail_bound(
            d in 3usize..7,
            entries in proptest::collection::vec(0.2f64..5.0, 6),
            x in proptest::collection::vec(-20.0f64..20.0, 6),
        ) {
            let s = DiagonalCovariance::new(entries[..d].to_vec()).unwrap();
            let w = WalkTwoPoint::new(s, 1e-10).unwrap();
            let a = w.evaluate(&x[..d]).unwrap();
            let b = w.evaluate_with_cutoff(&x[..d], 2 * a.cutoff).unwrap();
            prop_assert!((a.value - b.value).abs() <= a.tail_bound + b.tail_bound,
                "{a:?} {b:?}");
        }

        #[test]
        fn depends_only_on_quadratic_form(
            entries in proptest::collection::vec(0.2f64..5.0, 4),
            dir in proptest::collection::vec(-1.0f64..1.0, 4),
            q in 0.0f64..400.0,
        ) {
            let s = DiagonalCovariance::new(entries.clone()).unwrap();
            let norm: f64 = dir.iter().zip(&entries).map(|(u, e)| u * u / e).sum::<f64>();
            prop_assume!(norm > 1e-3);
            let scale = (q / norm).sqrt();
            let x: Vec<f64> = dir.iter().map(|u| u * scale).collect();
            // Point on the first axis with the same quadratic form.
            let mut y = vec![0.0; 4];
            y[0] = (q * entries[0]).sqrt();
            let a = walk_c(&s, &x, 1e-13).unwrap().value;
            let b = walk_c(&s, &y, 1e-13).unwrap().value;
            prop_assert!(((a - b) / b).abs() < 1e-12, "{a} {b}");
        }
    }
}
