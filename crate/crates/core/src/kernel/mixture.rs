use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::DiagonalCovariance;
use crate::quadrature::{integrate_adaptive, OrthantSphereRule};
use crate::special::{ln_gamma, sphere_area};
use crate::{Error, Result};

/// Relative tolerance under which two component covariances are merged.
pub const MERGE_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub covariance: DiagonalCovariance,
}

impl MixtureComponent {
    pub fn new(weight: f64, covariance: DiagonalCovariance) -> Self {
        Self { weight, covariance }
    }

    fn density(&self, x: &[f64]) -> f64 {
        let d = x.len() as f64;
        let norm = (2.0 * PI).powf(-d / 2.0) / self.covariance.determinant().sqrt();
        self.weight * norm * (-0.5 * self.covariance.inverse_quadratic_form(x)).exp()
    }
}

/// Signed mixture `λ Σᵢ wᵢ N(0, Sᵢ)` of centred Gaussian densities with
/// diagonal covariances. Closed under convolution; its Fourier transform is
/// `λ Σᵢ wᵢ exp(−k·Sᵢk/2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureKernel {
    dim: usize,
    components: Vec<MixtureComponent>,
    scale: f64,
}

impl GaussianMixtureKernel {
    pub fn new(dim: usize, components: Vec<MixtureComponent>, scale: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidKernel("dimension must be positive".into()));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidKernel(format!(
                "global scale {scale} must be finite and > 0"
            )));
        }
        for (i, c) in components.iter().enumerate() {
            if c.covariance.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: c.covariance.dim(),
                });
            }
            if !c.weight.is_finite() {
                return Err(Error::InvalidKernel(format!("component {i} weight is not finite")));
            }
        }
        Ok(Self {
            dim,
            components,
            scale,
        })
    }

    /// Single Gaussian density `N(0, Σ)`.
    pub fn gaussian(covariance: DiagonalCovariance) -> Self {
        Self {
            dim: covariance.dim(),
            components: vec![MixtureComponent::new(1.0, covariance)],
            scale: 1.0,
        }
    }

    pub fn standard_gaussian(dim: usize) -> Self {
        Self::gaussian(DiagonalCovariance::identity(dim))
    }

    /// Build from `(weight, covariance)` pairs with unit global scale.
    pub fn from_pairs(dim: usize, pairs: Vec<(f64, DiagonalCovariance)>) -> Result<Self> {
        let comps = pairs
            .into_iter()
            .map(|(w, c)| MixtureComponent::new(w, c))
            .collect();
        Self::new(dim, comps, 1.0)
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            components: Vec::new(),
            scale: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Effective weights `λ·wᵢ` paired with covariances.
    pub fn effective(&self) -> impl Iterator<Item = (f64, &DiagonalCovariance)> + '_ {
        self.components
            .iter()
            .map(move |c| (self.scale * c.weight, &c.covariance))
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.scale * self.components.iter().map(|c| c.density(x)).sum::<f64>()
    }

    /// Value at radius `r` for an isotropic mixture (uses the first covariance entry).
    fn evaluate_isotropic(&self, r: f64) -> f64 {
        let d = self.dim as f64;
        self.effective()
            .map(|(w, s)| {
                let v = s.entries()[0];
                w * (2.0 * PI * v).powf(-d / 2.0) * (-0.5 * r * r / v).exp()
            })
            .sum()
    }

    pub fn fourier(&self, k: &[f64]) -> f64 {
        self.effective()
            .map(|(w, s)| w * (-0.5 * s.quadratic_form(k)).exp())
            .sum()
    }

    /// `ĥ(0) − ĥ(k)`, computed without cancellation near `k = 0`.
    pub fn fourier_deficit(&self, k: &[f64]) -> f64 {
        self.effective()
            .map(|(w, s)| -w * (-0.5 * s.quadratic_form(k)).exp_m1())
            .sum()
    }

    /// `∫ h = ĥ(0)`.
    pub fn mass(&self) -> f64 {
        self.effective().map(|(w, _)| w).sum()
    }

    /// `Σ λ|wᵢ|`, an upper bound on `‖h‖₁` and on `sup |ĥ|`.
    pub fn abs_weight(&self) -> f64 {
        self.effective().map(|(w, _)| w.abs()).sum()
    }

    /// Signed second moments `∫ xᵢ² h(x) dx` for each axis.
    pub fn second_moments(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (w, s) in self.effective() {
            for (o, v) in out.iter_mut().zip(s.entries()) {
                *o += w * v;
            }
        }
        out
    }

    /// Multiply every weight by `factor` (the global scale is kept).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            components: self
                .components
                .iter()
                .map(|c| MixtureComponent::new(c.weight * factor, c.covariance.clone()))
                .collect(),
            scale: self.scale,
        }
    }

    /// Fold the global scale into the weights and merge components whose
    /// covariances agree within [`MERGE_REL_TOL`].
    pub fn normalized(&self) -> Self {
        let mut merged: Vec<MixtureComponent> = Vec::new();
        for (w, s) in self.effective() {
            match merged
                .iter_mut()
                .find(|c| c.covariance.approx_eq(s, MERGE_REL_TOL))
            {
                Some(c) => c.weight += w,
                None => merged.push(MixtureComponent::new(w, s.clone())),
            }
        }
        Self {
            dim: self.dim,
            components: merged,
            scale: 1.0,
        }
    }

    /// Convolution: weights multiply, covariances add; equal covariances merge.
    pub fn convolve(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut comps = Vec::with_capacity(self.components.len() * other.components.len());
        for (wa, sa) in self.effective() {
            for (wb, sb) in other.effective() {
                comps.push(MixtureComponent::new(wa * wb, sa.sum(sb)));
            }
        }
        Ok(Self {
            dim: self.dim,
            components: comps,
            scale: 1.0,
        }
        .normalized())
    }

    /// Linear combination `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let comps = self
            .effective()
            .map(|(w, s)| MixtureComponent::new(a * w, s.clone()))
            .chain(
                other
                    .effective()
                    .map(|(w, s)| MixtureComponent::new(b * w, s.clone())),
            )
            .collect();
        Ok(Self {
            dim: self.dim,
            components: comps,
            scale: 1.0,
        }
        .normalized())
    }

    pub fn is_nonnegative(&self) -> bool {
        self.effective().all(|(w, _)| w >= 0.0)
    }

    pub fn is_isotropic(&self) -> bool {
        self.components
            .iter()
            .all(|c| c.covariance.is_isotropic(MERGE_REL_TOL))
    }

    /// If every covariance is a scalar multiple of one diagonal shape, return
    /// that shape (normalized so its first entry is 1) and the multipliers.
    pub fn common_shape(&self) -> Option<(DiagonalCovariance, Vec<f64>)> {
        let first = self.components.first()?;
        let base = first.covariance.scaled(1.0 / first.covariance.entries()[0]);
        let factors = self
            .components
            .iter()
            .map(|c| c.covariance.ratio_to(&base, 1e-10))
            .collect::<Option<Vec<_>>>()?;
        Some((base, factors))
    }

    /// Smallest covariance eigenvalue over all components.
    pub fn min_variance(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.covariance.min_entry())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_variance(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.covariance.max_entry())
            .fold(0.0, f64::max)
    }

    /// `‖ |x|^a h ‖_p`.
    pub fn moment(&self, order: f64, p: f64) -> f64 {
        let d = self.dim;
        if self.components.is_empty() {
            return 0.0;
        }
        if p == 1.0 && self.is_nonnegative() {
            if order == 0.0 {
                return self.mass();
            }
            if order == 2.0 {
                return self.second_moments().iter().sum();
            }
        }
        let merged = self.normalized();
        if merged.components.len() == 1 && merged.components[0].covariance.is_isotropic(MERGE_REL_TOL)
        {
            let c = &merged.components[0];
            let s = c.covariance.entries()[0];
            return single_isotropic_moment(d, c.weight, s, order, p);
        }
        let m = order * p + d as f64 - 1.0;
        let r_cut = (merged.max_variance() / p).sqrt() * (m.sqrt() + 12.0);
        let breaks: Vec<f64> = (0..=16).map(|i| r_cut * i as f64 / 16.0).collect();
        let integral = if merged.is_isotropic() {
            let area = sphere_area(d);
            integrate_adaptive(
                |r| {
                    let h = merged.evaluate_isotropic(r).abs();
                    area * r.powf(m) * h.powf(p)
                },
                &breaks,
                0.0,
                1e-11,
                4000,
            )
        } else if merged.components.len() == 1 {
            // ∫₀^∞ r^m e^{−p r² q(ω)/2} dr in closed form along each direction.
            let c = &merged.components[0];
            let rule = OrthantSphereRule::new(d, if d <= 3 { 32 } else { 12 });
            let norm = (c.weight.abs() * (2.0 * PI).powf(-(d as f64) / 2.0)
                / c.covariance.determinant().sqrt())
            .powf(p);
            let radial = (ln_gamma((m + 1.0) / 2.0)).exp() / 2.0;
            let ang = rule.integrate(|w| {
                let q = c.covariance.inverse_quadratic_form(w);
                (p * q / 2.0).powf(-(m + 1.0) / 2.0)
            });
            return (norm * radial * ang).powf(1.0 / p);
        } else {
            let rule = OrthantSphereRule::new(d, if d <= 3 { 24 } else { 10 });
            let (gx, gw) = crate::quadrature::gauss_legendre(24);
            let panels = 6;
            let h = r_cut / panels as f64;
            let mut x = vec![0.0; d];
            let value = rule.integrate(|w| {
                let mut acc = 0.0;
                for panel in 0..panels {
                    let a = panel as f64 * h;
                    for (xi, wi) in gx.iter().zip(&gw) {
                        let r = a + 0.5 * h * (xi + 1.0);
                        for (x, u) in x.iter_mut().zip(w) {
                            *x = r * u;
                        }
                        acc += 0.5 * h * wi * r.powf(m) * merged.evaluate(&x).abs().powf(p);
                    }
                }
                acc
            });
            crate::quadrature::Integral {
                value,
                error: 0.0,
                magnitude: value,
                converged: true,
            }
        };
        integral.value.powf(1.0 / p)
    }
}

/// `‖ |x|^a w N(0, s·Id) ‖_p` in closed form.
fn single_isotropic_moment(d: usize, weight: f64, s: f64, order: f64, p: f64) -> f64 {
    let df = d as f64;
    let m = order * p + df - 1.0;
    let c = p / (2.0 * s);
    // ∫₀^∞ r^m e^{−c r²} dr = Γ((m+1)/2) / (2 c^{(m+1)/2})
    let ln_radial = ln_gamma((m + 1.0) / 2.0) - (2.0f64).ln() - (m + 1.0) / 2.0 * c.ln();
    let ln_norm = p * (weight.abs().ln() - df / 2.0 * (2.0 * PI * s).ln());
    let ln_total = ln_norm + sphere_area(d).ln() + ln_radial;
    (ln_total / p).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iso(d: usize, s: f64) -> DiagonalCovariance {
        DiagonalCovariance::scaled_identity(d, s)
    }

    #[test]
    fn evaluate_standard_gaussian_at_origin() {
        let g = GaussianMixtureKernel::standard_gaussian(3);
        assert!((g.evaluate(&[0.0; 3]) - (2.0 * PI).powf(-1.5)).abs() < 1e-16);
        assert!((g.evaluate(&[0.0; 3]) - 0.063_493_6).abs() < 1e-7);
        assert!(g.evaluate(&[40.0, 0.0, 0.0]) < 1e-300);
    }

    #[test]
    fn evaluate_signed_mixture_at_origin() {
        let m = GaussianMixtureKernel::from_pairs(5, vec![(1.2, iso(5, 1.0)), (-0.2, iso(5, 2.0))])
            .unwrap();
        let expected = 1.2 * (2.0 * PI).powf(-2.5) - 0.2 * (4.0 * PI).powf(-2.5);
        assert!((m.evaluate(&[0.0; 5]) - expected).abs() < 1e-16);
    }

    #[test]
    fn fourier_values() {
        let g = GaussianMixtureKernel::standard_gaussian(3);
        assert_eq!(g.fourier(&[0.0; 3]), 1.0);
        assert!((g.fourier(&[0.6, 0.0, 0.8]) - (-0.5f64).exp()).abs() < 1e-15);
        let m = GaussianMixtureKernel::from_pairs(3, vec![(1.2, iso(3, 1.0)), (-0.2, iso(3, 1.0))])
            .unwrap();
        assert!((m.fourier(&[0.0; 3]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn convolution_adds_covariances() {
        let g = GaussianMixtureKernel::standard_gaussian(3);
        let gg = g.convolve(&g).unwrap();
        assert_eq!(gg.components().len(), 1);
        assert_eq!(gg.components()[0].covariance, iso(3, 2.0));
        assert_eq!(gg.components()[0].weight, 1.0);

        let half = GaussianMixtureKernel::from_pairs(3, vec![(0.5, iso(3, 1.0))]).unwrap();
        let q = half.convolve(&half).unwrap();
        assert_eq!(q.components()[0].weight, 0.25);
        assert_eq!(q.components()[0].covariance, iso(3, 2.0));
    }

    #[test]
    fn convolution_with_near_delta() {
        let a = GaussianMixtureKernel::from_pairs(3, vec![(1.3, iso(3, 1.0)), (-0.3, iso(3, 2.5))])
            .unwrap();
        let delta = GaussianMixtureKernel::gaussian(iso(3, 1e-6));
        let c = a.convolve(&delta).unwrap();
        let before = a.evaluate(&[0.0; 3]);
        let after = c.evaluate(&[0.0; 3]);
        assert!(((after - before) / before).abs() < 1e-3);
    }

    #[test]
    fn convolution_merges_equal_covariances() {
        let a = GaussianMixtureKernel::from_pairs(3, vec![(0.5, iso(3, 1.0)), (0.5, iso(3, 2.0))])
            .unwrap();
        // (1+2) and (2+1) coincide
        let c = a.convolve(&a).unwrap();
        assert_eq!(c.components().len(), 3);
    }

    #[test]
    fn moments_closed_form() {
        let g = GaussianMixtureKernel::standard_gaussian(3);
        assert!((g.moment(2.0, 1.0) - 3.0).abs() < 1e-14);
        assert!((g.moment(0.0, 1.0) - 1.0).abs() < 1e-14);
        // closed-form branch for a = 4: E|Z|⁴ = d(d+2) = 15
        assert!((g.moment(4.0, 1.0) - 15.0).abs() < 1e-11);
        // L² norm of N(0, Id) in d = 3: (4π)^{-3/4}
        assert!((g.moment(0.0, 2.0) - (4.0 * PI).powf(-0.75)).abs() < 1e-13);
    }

    #[test]
    fn moments_by_quadrature_match_closed_form() {
        // anisotropic single Gaussian: p = 1, a = 2 must equal trace
        let s = DiagonalCovariance::new(vec![1.0, 2.0, 3.0]).unwrap();
        let g = GaussianMixtureKernel::gaussian(s.clone());
        // ‖N(0,S)‖₂² = (4π)^{-d/2} det(S)^{-1/2}
        let l2 = g.moment(0.0, 2.0);
        let exact = ((4.0 * PI).powf(-1.5) / s.determinant().sqrt()).sqrt();
        assert!(((l2 - exact) / exact).abs() < 1e-7, "{l2} vs {exact}");
        // isotropic signed mixture: L¹ norm at a=0 is at least |mass|
        let m = GaussianMixtureKernel::from_pairs(5, vec![(1.25, iso(5, 1.0)), (-0.25, iso(5, 2.0))])
            .unwrap();
        let l1 = m.moment(0.0, 1.0);
        assert!(l1 > 1.0 && l1 < 1.5, "{l1}");
    }

    #[test]
    fn anisotropic_mixture_l2_norm() {
        // ‖h‖₂² = Σᵢⱼ wᵢwⱼ N(0, Sᵢ + Sⱼ)(0)
        let a = DiagonalCovariance::new(vec![1.0, 2.0, 0.5]).unwrap();
        let b = DiagonalCovariance::new(vec![2.0, 1.0, 1.0]).unwrap();
        let m = GaussianMixtureKernel::from_pairs(3, vec![(1.2, a.clone()), (-0.2, b.clone())])
            .unwrap();
        let pairs = [(1.2, &a), (-0.2, &b)];
        let mut exact = 0.0;
        for (wi, si) in pairs {
            for (wj, sj) in pairs {
                exact += wi * wj * GaussianMixtureKernel::gaussian(si.sum(sj)).evaluate(&[0.0; 3]);
            }
        }
        let l2 = m.moment(0.0, 2.0);
        assert!(((l2 - exact.sqrt()) / l2).abs() < 1e-6, "{l2} vs {}", exact.sqrt());
    }
}
