use serde::{Deserialize, Serialize};

use crate::quadrature::integrate_adaptive;
use crate::special::{gamma, radial_fourier_factor, sphere_area};
use crate::{Error, Result};
use statrs::function::beta::{beta_reg, ln_beta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    #[default]
    Linear,
    Cubic,
}

/// Fourier value of a tabulated kernel together with its quadrature residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourierValue {
    pub value: f64,
    pub residual: f64,
}

/// Radial kernel `h(x) = h(|x|)` given on a radius grid, continued beyond the
/// last radius `R` by the power-law tail `h(R)·((1+R)/(1+r))^{d+2+ρ}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialTabulatedKernel {
    dim: usize,
    radii: Vec<f64>,
    values: Vec<f64>,
    interpolation: Interpolation,
    tail_exponent: f64,
}

impl RadialTabulatedKernel {
    pub fn new(
        dim: usize,
        radii: Vec<f64>,
        values: Vec<f64>,
        interpolation: Interpolation,
        tail_exponent: f64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidKernel("dimension must be positive".into()));
        }
        if radii.len() != values.len() {
            return Err(Error::InvalidKernel(format!(
                "{} radii but {} values",
                radii.len(),
                values.len()
            )));
        }
        if radii.len() < 2 {
            return Err(Error::InvalidKernel("need at least two radial samples".into()));
        }
        if radii[0] < 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidKernel(
                "radii must be nonnegative and strictly increasing".into(),
            ));
        }
        if radii.iter().chain(&values).any(|v| !v.is_finite()) || !tail_exponent.is_finite() {
            return Err(Error::InvalidKernel("non-finite table entry".into()));
        }
        let kernel = Self {
            dim,
            radii,
            values,
            interpolation,
            tail_exponent,
        };
        kernel.check_tail_model()?;
        Ok(kernel)
    }

    /// The data near the end of the table must decay at least as fast as the
    /// declared tail: `|h(rᵢ)|(1+rᵢ)^s` may not grow by more than 10% over the
    /// last three samples.
    fn check_tail_model(&self) -> Result<()> {
        let s = self.tail_decay();
        let n = self.radii.len();
        let scaled: Vec<f64> = (n.saturating_sub(3)..n)
            .map(|i| self.values[i].abs() * (1.0 + self.radii[i]).powf(s))
            .collect();
        let last = *scaled.last().unwrap();
        if scaled.iter().any(|&v| last > 1.1 * v && last > 0.0) {
            return Err(Error::InvalidKernel(format!(
                "table decays slower than the declared tail (1+r)^-{s}"
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn tail_exponent(&self) -> f64 {
        self.tail_exponent
    }

    /// Power `s = d + 2 + ρ` of the tail model `(1+r)^{−s}`.
    pub fn tail_decay(&self) -> f64 {
        self.dim as f64 + 2.0 + self.tail_exponent
    }

    fn last_radius(&self) -> f64 {
        *self.radii.last().unwrap()
    }

    fn tail_amplitude(&self) -> f64 {
        self.values.last().unwrap() * (1.0 + self.last_radius()).powf(self.tail_decay())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    /// Radial profile `h(r)`.
    pub fn profile(&self, r: f64) -> f64 {
        let r = r.abs();
        if r <= self.radii[0] {
            return self.values[0];
        }
        if r >= self.last_radius() {
            return self.tail_amplitude() * (1.0 + r).powf(-self.tail_decay());
        }
        let i = self.radii.partition_point(|&x| x <= r) - 1;
        let (r0, r1) = (self.radii[i], self.radii[i + 1]);
        let (v0, v1) = (self.values[i], self.values[i + 1]);
        let h = r1 - r0;
        let t = (r - r0) / h;
        match self.interpolation {
            Interpolation::Linear => v0 + t * (v1 - v0),
            Interpolation::Cubic => {
                let m0 = self.slope(i) * h;
                let m1 = self.slope(i + 1) * h;
                let t2 = t * t;
                let t3 = t2 * t;
                (2.0 * t3 - 3.0 * t2 + 1.0) * v0
                    + (t3 - 2.0 * t2 + t) * m0
                    + (-2.0 * t3 + 3.0 * t2) * v1
                    + (t3 - t2) * m1
            }
        }
    }

    fn slope(&self, i: usize) -> f64 {
        let n = self.radii.len();
        let (a, b) = match i {
            0 => (0, 1),
            _ if i == n - 1 => (n - 2, n - 1),
            _ => (i - 1, i + 1),
        };
        (self.values[b] - self.values[a]) / (self.radii[b] - self.radii[a])
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.profile(r)
    }

    fn table_breakpoints(&self) -> Vec<f64> {
        let mut b = Vec::with_capacity(self.radii.len() + 1);
        if self.radii[0] > 0.0 {
            b.push(0.0);
        }
        b.extend_from_slice(&self.radii);
        b
    }

    /// `∫_R^∞ r^m (1+r)^{−q} dr`, or `+∞` when divergent.
    fn tail_power_integral(radius: f64, m: f64, q: f64) -> f64 {
        let b = q - m - 1.0;
        if b <= 0.0 {
            return f64::INFINITY;
        }
        let a = m + 1.0;
        // t = r/(1+r): ∫_{R/(1+R)}^1 t^m (1−t)^{q−m−2} dt = B(a,b) I_{1/(1+R)}(b, a)
        ln_beta(a, b).exp() * beta_reg(b, a, 1.0 / (1.0 + radius))
    }

    /// `‖ |x|^a h ‖_p`; `+∞` when the tail model makes it diverge.
    pub fn moment(&self, order: f64, p: f64) -> f64 {
        let d = self.dim as f64;
        let m = d - 1.0 + order * p;
        let amp = self.tail_amplitude().abs();
        let tail = if amp == 0.0 {
            0.0
        } else {
            let t = Self::tail_power_integral(self.last_radius(), m, self.tail_decay() * p);
            if t.is_infinite() {
                return f64::INFINITY;
            }
            amp.powf(p) * t
        };
        let body = integrate_adaptive(
            |r| r.powf(m) * self.profile(r).abs().powf(p),
            &self.table_breakpoints(),
            0.0,
            1e-12,
            20 * self.radii.len() + 200,
        );
        (sphere_area(self.dim) * (body.value + tail)).powf(1.0 / p)
    }

    /// Signed radial moment `∫ |x|^a h(x) dx`.
    pub fn signed_moment(&self, order: f64) -> f64 {
        let d = self.dim as f64;
        let m = d - 1.0 + order;
        let body = integrate_adaptive(
            |r| r.powf(m) * self.profile(r),
            &self.table_breakpoints(),
            0.0,
            1e-13,
            20 * self.radii.len() + 200,
        );
        let tail = self.tail_amplitude()
            * Self::tail_power_integral(self.last_radius(), m, self.tail_decay());
        sphere_area(self.dim) * (body.value + tail)
    }

    /// `ĥ(k)` by a radial Hankel-type quadrature: `|S^{d−1}| ∫ h(r) r^{d−1} Λ_d(|k|r) dr`.
    pub fn fourier(&self, k: &[f64], rel_tol: f64) -> Result<FourierValue> {
        let kn = k.iter().map(|v| v * v).sum::<f64>().sqrt();
        let d = self.dim;
        let area = sphere_area(d);
        let s = self.tail_decay();
        let big_r = self.last_radius();
        let amp = self.tail_amplitude();
        let mass_scale = self.moment(0.0, 1.0);
        if kn == 0.0 {
            let tail = Self::tail_power_integral(big_r, d as f64 - 1.0, s);
            if tail.is_infinite() && amp != 0.0 {
                return Err(Error::FourierNonConvergence {
                    residual: f64::INFINITY,
                });
            }
            return Ok(FourierValue {
                value: self.signed_moment(0.0),
                residual: 0.0,
            });
        }
        let dm1 = d as f64 - 1.0;
        let integrand = |r: f64| self.profile(r) * r.powf(dm1) * radial_fourier_factor(d, kn * r);
        // Breakpoints at most half an oscillation apart.
        let step = std::f64::consts::PI / kn;
        let mut breaks = Vec::new();
        for w in self.table_breakpoints().windows(2) {
            let pieces = ((w[1] - w[0]) / step).ceil().max(1.0) as usize;
            for j in 0..pieces {
                breaks.push(w[0] + (w[1] - w[0]) * j as f64 / pieces as f64);
            }
        }
        breaks.push(big_r);
        let body = integrate_adaptive(integrand, &breaks, 0.0, 1e-12, 4 * breaks.len() + 500);
        let mut value = body.value;
        let mut residual = body.error;
        if amp != 0.0 {
            // Envelope of |Λ_d(t)|: 1, or the Hankel amplitude for large t.
            let nu = d as f64 / 2.0 - 1.0;
            let hankel = gamma(d as f64 / 2.0) * 2f64.powf(nu) * (2.0 / std::f64::consts::PI).sqrt() * 1.2;
            let remainder = |t_end: f64| -> f64 {
                let crude = amp.abs() * Self::tail_power_integral(t_end, dm1, s);
                let expo = s - (d as f64 + 1.0) / 2.0;
                let sharp = if kn * t_end > nu * nu + 1.0 && expo > 0.0 {
                    amp.abs() * hankel * kn.powf(-(dm1) / 2.0) * t_end.powf(-expo) / expo
                } else {
                    f64::INFINITY
                };
                crude.min(sharp)
            };
            let target = rel_tol * mass_scale.max(f64::MIN_POSITIVE);
            let max_panels = 4000usize;
            let mut panels = 8usize;
            let mut t_end = big_r + panels as f64 * step;
            while remainder(t_end) * area > target && panels < max_panels {
                panels *= 2;
                t_end = big_r + panels as f64 * step;
            }
            let tail = integrate_adaptive(
                |r| amp * (1.0 + r).powf(-s) * r.powf(dm1) * radial_fourier_factor(d, kn * r),
                &(0..=panels)
                    .map(|j| big_r + step * j as f64)
                    .collect::<Vec<_>>(),
                0.0,
                1e-12,
                4 * panels + 500,
            );
            value += tail.value;
            residual += tail.error + remainder(t_end);
        }
        let out = FourierValue {
            value: area * value,
            residual: area * residual,
        };
        if !(out.residual <= rel_tol * mass_scale.max(out.value.abs()) * 10.0) {
            return Err(Error::FourierNonConvergence {
                residual: out.residual,
            });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Standard Gaussian profile in d = 3 sampled on [0, 12].
    fn gaussian_table(d: usize, interp: Interpolation) -> RadialTabulatedKernel {
        let radii: Vec<f64> = (0..=1200).map(|i| i as f64 * 0.01).collect();
        let values = radii
            .iter()
            .map(|r| (2.0 * PI).powf(-(d as f64) / 2.0) * (-0.5 * r * r).exp())
            .collect();
        RadialTabulatedKernel::new(d, radii, values, interp, 4.0).unwrap()
    }

    #[test]
    fn table_reproduces_gaussian_mass_and_moments() {
        let k = gaussian_table(3, Interpolation::Cubic);
        assert!((k.moment(0.0, 1.0) - 1.0).abs() < 1e-8);
        assert!((k.moment(2.0, 1.0) - 3.0).abs() < 1e-7);
        let f0 = k.fourier(&[0.0; 3], 1e-8).unwrap();
        assert!((f0.value - 1.0).abs() < 1e-8);
    }

    #[test]
    fn table_fourier_matches_gaussian() {
        let k = gaussian_table(3, Interpolation::Cubic);
        for &kn in &[0.3, 1.0, 2.0] {
            let f = k.fourier(&[kn, 0.0, 0.0], 1e-8).unwrap();
            assert!((f.value - (-0.5 * kn * kn).exp()).abs() < 1e-7, "k={kn}: {f:?}");
        }
        let k5 = gaussian_table(5, Interpolation::Linear);
        let f = k5.fourier(&[0.0, 1.0, 0.0, 0.0, 0.0], 1e-6).unwrap();
        assert!((f.value - (-0.5f64).exp()).abs() < 1e-4, "{f:?}");
    }

    #[test]
    fn heavy_tail_moment_diverges() {
        // decay (1+r)^{-(d+1)}: ρ = −1
        let d = 3;
        let radii: Vec<f64> = (0..=100).map(|i| i as f64 * 0.2).collect();
        let values = radii.iter().map(|r| (1.0 + r).powf(-(d as f64 + 1.0))).collect();
        let k = RadialTabulatedKernel::new(d, radii, values, Interpolation::Linear, -1.0).unwrap();
        assert!(k.moment(0.0, 1.0).is_finite());
        assert!(k.moment(0.5, 1.0).is_finite());
        assert!(k.moment(2.1, 1.0).is_infinite());
        assert!(k.moment(2.0, 1.0).is_infinite());
        // L² converges even where L¹ does not
        assert!(k.moment(2.0, 2.0).is_finite());
    }

    #[test]
    fn tail_power_integral_closed_form() {
        // ∫_R^∞ (1+r)^{-3} dr = (1+R)^{-2}/2
        let v = RadialTabulatedKernel::tail_power_integral(2.0, 0.0, 3.0);
        assert!((v - 1.0 / 18.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_tail_model_violation() {
        let radii = vec![0.0, 1.0, 2.0, 3.0];
        // grows in the last samples
        let values = vec![1.0, 0.1, 0.1, 0.1];
        assert!(RadialTabulatedKernel::new(3, radii, values, Interpolation::Linear, 2.0).is_err());
    }

    #[test]
    fn evenness_is_exact() {
        let k = gaussian_table(3, Interpolation::Linear);
        let x = [0.37, -1.2, 2.9];
        let mx = [-0.37, 1.2, -2.9];
        assert_eq!(k.evaluate(&x), k.evaluate(&mx));
    }
}
