//! Solution of `(δ − J) ∗ G = g` through the decomposition
//! `H = G − g = ĝ(0)·C + f`.
//!
//! `C` is the Gaussian-walk series with step covariance `Σ = diag(∫xᵢ²J)`;
//! the remainder has Fourier transform
//!
//! `f̂ = Ê / ((1 − D̂)(1 − Ĵ))`, `Ê = ĝĴ(1 − D̂) − ĝ(0)D̂²(1 − Ĵ)`,
//!
//! which is much less singular at `k = 0` than `Ĥ = Ĵĝ/(1 − Ĵ)`. Two engines
//! invert `f̂`: a one-dimensional Hankel transform when every component of `J`
//! and `g` shares one diagonal shape, and a discrete cosine sum on a uniform
//! `k`-grid otherwise.

mod checks;
mod fft;
mod oracle;
mod radial;

pub use checks::{
    defining_equation_residual, remainder_decay_check, DecayVerdict, EquationResidual,
    RemainderDecay,
};
pub use fft::{FftGrid, FftSettings};
pub use oracle::{neumann_series, solve_direct_quadrature, DirectQuadratureSettings, OracleValue};
pub use radial::RadialSettings;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assumptions::{estimate_infrared, InfraredGrid, USER_CRITICALITY_TOL};
use crate::gausswalk::WalkTwoPoint;
use crate::kernel::{DiagonalCovariance, GaussianMixtureKernel, Kernel};
use crate::{Error, Result};

/// Which inversion of `f̂` to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    /// Radial when the problem has a common diagonal shape, grid otherwise.
    #[default]
    Auto,
    Radial,
    Fft,
}

/// Solver configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub engine: Engine,
    pub fft: FftSettings,
    pub radial: RadialSettings,
    /// Relative tolerance of the walk series `C`.
    pub series_rel_tol: f64,
    /// Allowed `|Ĵ(0) − 1|`.
    pub criticality_tolerance: f64,
    /// Invert `Ĥ` directly for `Ĵ(0) < 1` instead of requiring criticality.
    pub subcritical: bool,
    pub infrared: InfraredGrid,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            engine: Engine::Auto,
            fft: FftSettings::default(),
            radial: RadialSettings::default(),
            series_rel_tol: 1e-10,
            criticality_tolerance: USER_CRITICALITY_TOL,
            subcritical: false,
            infrared: InfraredGrid::default(),
        }
    }
}

/// `Σ = diag(∫ xᵢ² J(x) dx)`; every entry must be positive.
pub fn derive_sigma(j: &Kernel) -> Result<DiagonalCovariance> {
    let moments = j.second_moments();
    if let Some((index, &value)) = moments
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.is_finite() && **v > 0.0))
    {
        return Err(Error::NonPositiveSigma { index, value });
    }
    DiagonalCovariance::new(moments)
}

/// A validated instance of the convolution equation.
#[derive(Debug, Clone)]
pub struct DeconvProblem {
    j: Kernel,
    g: Kernel,
    sigma: DiagonalCovariance,
    j_hat0: f64,
    g_hat0: f64,
    k_ir: f64,
    settings: SolverSettings,
}

impl DeconvProblem {
    /// Validate dimensions, criticality (unless subcritical mode is requested),
    /// the infrared bound and positivity of `Σ`.
    pub fn new(j: Kernel, g: Kernel, settings: SolverSettings) -> Result<Self> {
        let d = j.dim();
        if g.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: g.dim(),
            });
        }
        if d < 3 {
            return Err(Error::DimensionTooSmall(d));
        }
        let j_hat0 = j.mass()?;
        let g_hat0 = g.mass()?;
        let deviation = (j_hat0 - 1.0).abs();
        if settings.subcritical {
            if !(j_hat0 < 1.0) {
                return Err(Error::InvalidArgument {
                    name: "subcritical",
                    reason: format!("subcritical mode needs Ĵ(0) < 1, got {j_hat0}"),
                });
            }
        } else if deviation > settings.criticality_tolerance {
            return Err(Error::NotCritical {
                deviation,
                tolerance: settings.criticality_tolerance,
            });
        }
        let sigma = derive_sigma(&j)?;
        let k_ir = estimate_infrared(&j, &settings.infrared)?.constant;
        if !(k_ir > 0.0) {
            return Err(Error::InfraredBound(k_ir));
        }
        Ok(Self {
            j,
            g,
            sigma,
            j_hat0,
            g_hat0,
            k_ir,
            settings,
        })
    }

    pub fn dim(&self) -> usize {
        self.j.dim()
    }

    pub fn j(&self) -> &Kernel {
        &self.j
    }

    pub fn g(&self) -> &Kernel {
        &self.g
    }

    pub fn sigma(&self) -> &DiagonalCovariance {
        &self.sigma
    }

    pub fn g_hat0(&self) -> f64 {
        self.g_hat0
    }

    pub fn j_hat0(&self) -> f64 {
        self.j_hat0
    }

    /// Infrared constant of `J`.
    pub fn k_ir(&self) -> f64 {
        self.k_ir
    }

    /// Infrared constant of `D`: `1 − exp(−λ_min(Σ)/2)`.
    pub fn k_ir_sigma(&self) -> f64 {
        -(-0.5 * self.sigma.min_entry()).exp_m1()
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    pub fn is_subcritical(&self) -> bool {
        self.settings.subcritical
    }

    pub fn d_hat(&self, k: &[f64]) -> f64 {
        (-0.5 * self.sigma.quadratic_form(k)).exp()
    }

    /// `1 − D̂(k)` without cancellation.
    pub fn one_minus_d_hat(&self, k: &[f64]) -> f64 {
        -(-0.5 * self.sigma.quadratic_form(k)).exp_m1()
    }

    /// `1 − Ĵ(k) = (Ĵ(0) − Ĵ(k)) + (1 − Ĵ(0))`.
    pub fn one_minus_j_hat(&self, k: &[f64]) -> Result<f64> {
        Ok(self.j.fourier_deficit(k)? + (1.0 - self.j_hat0))
    }

    /// `Ê(k) = ĝĴ(1 − D̂) − ĝ(0)D̂²(1 − Ĵ)`.
    pub fn e_hat(&self, k: &[f64]) -> Result<f64> {
        let dh = self.d_hat(k);
        Ok(self.g.fourier(k)? * self.j.fourier(k)? * self.one_minus_d_hat(k)
            - self.g_hat0 * dh * dh * self.one_minus_j_hat(k)?)
    }

    /// `f̂(k) = Ê / ((1 − D̂)(1 − Ĵ))` for `k ≠ 0`.
    pub fn f_hat(&self, k: &[f64]) -> Result<f64> {
        let norm2: f64 = k.iter().map(|v| v * v).sum();
        if norm2 == 0.0 {
            return Err(Error::InvalidArgument {
                name: "k",
                reason: "f̂ is not evaluated at the origin".into(),
            });
        }
        let denom = self.one_minus_d_hat(k) * self.one_minus_j_hat(k)?;
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::SingularDenominator(norm2.sqrt()));
        }
        Ok(self.e_hat(k)? / denom)
    }

    /// `Ĥ(k) = Ĵĝ / (1 − Ĵ)`.
    pub fn h_hat(&self, k: &[f64]) -> Result<f64> {
        let denom = self.one_minus_j_hat(k)?;
        if denom == 0.0 {
            let norm = k.iter().map(|v| v * v).sum::<f64>().sqrt();
            return Err(Error::SingularDenominator(norm));
        }
        Ok(self.j.fourier(k)? * self.g.fourier(k)? / denom)
    }

    /// `Ĉ(k) = D̂² / (1 − D̂)`.
    pub fn c_hat(&self, k: &[f64]) -> f64 {
        let dh = self.d_hat(k);
        dh * dh / self.one_minus_d_hat(k)
    }

    /// The function inverted numerically: `f̂` at criticality, `Ĥ` in
    /// subcritical mode (where no walk term is split off).
    pub(crate) fn remainder_hat(&self, k: &[f64]) -> Result<f64> {
        if self.is_subcritical() {
            self.h_hat(k)
        } else {
            self.f_hat(k)
        }
    }

    /// Gaussian components whose absolute weights majorize the numerator of
    /// [`Self::remainder_hat`]: `|num(k)| ≤ Σ |w| exp(−k·Sk/2)`.
    pub(crate) fn numerator_majorant(&self) -> Option<Vec<(f64, DiagonalCovariance)>> {
        let j = self.j.as_mixture()?;
        let g = self.g.as_mixture()?;
        let gj = g.convolve(j).ok()?;
        let terms: Vec<GaussianMixtureKernel> = if self.is_subcritical() {
            vec![gj]
        } else {
            let dker = GaussianMixtureKernel::gaussian(self.sigma.clone());
            let dd = dker.convolve(&dker).ok()?.scaled(self.g_hat0);
            let gjd = gj.convolve(&dker).ok()?;
            let ddj = dd.convolve(j).ok()?;
            vec![gj, gjd, dd, ddj]
        };
        Some(
            terms
                .iter()
                .flat_map(|m| m.effective().map(|(w, s)| (w.abs(), s.clone())))
                .collect(),
        )
    }

    /// Lower bound on the denominator of [`Self::remainder_hat`] for `|k| ≥ 1`.
    pub(crate) fn denominator_floor(&self) -> f64 {
        if self.is_subcritical() {
            (1.0 - self.j_hat0) + self.k_ir
        } else {
            self.k_ir * self.k_ir_sigma()
        }
    }

    /// Common diagonal shape `S` (first entry 1) of every component of `J`
    /// and `g`; `Id` for radial tables. `None` when no such shape exists.
    pub fn common_shape(&self) -> Option<DiagonalCovariance> {
        let d = self.dim();
        let isotropic = |k: &Kernel| match k {
            Kernel::Tabulated(_) => true,
            Kernel::Mixture(m) => m.is_isotropic(),
        };
        match (&self.j, &self.g) {
            (Kernel::Mixture(j), Kernel::Mixture(g)) => {
                let mut all = j.components().to_vec();
                all.extend_from_slice(g.components());
                let joint = GaussianMixtureKernel::new(d, all, 1.0).ok()?;
                joint.common_shape().map(|(s, _)| s)
            }
            (a, b) if isotropic(a) && isotropic(b) => Some(DiagonalCovariance::identity(d)),
            _ => None,
        }
    }

    /// Solve at the given points.
    pub fn solve(&self, points: &[Vec<f64>]) -> Result<DeconvResult> {
        let d = self.dim();
        if let Some(p) = points.iter().find(|p| p.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: p.len(),
            });
        }
        let engine = match self.settings.engine {
            Engine::Auto if self.common_shape().is_some() => EngineKind::Radial,
            Engine::Auto => EngineKind::Fft,
            Engine::Radial => EngineKind::Radial,
            Engine::Fft => EngineKind::Fft,
        };
        let remainder = match engine {
            EngineKind::Radial => radial::evaluate(self, points)?,
            EngineKind::Fft => {
                let grid = FftGrid::build(self)?;
                grid.evaluate(points)
            }
        };
        let walk = WalkTwoPoint::new(self.sigma.clone(), self.settings.series_rel_tol)?;
        let rows: Vec<Result<PointResult>> = points
            .par_iter()
            .zip(remainder.values.par_iter())
            .map(|(x, rem)| {
                let (c, series_err) = if self.is_subcritical() {
                    (0.0, 0.0)
                } else {
                    let v = walk.evaluate(x)?;
                    (v.value, v.tail_bound * self.g_hat0.abs())
                };
                let h = self.g_hat0 * c + rem.value;
                let source = self.g.evaluate(x)?;
                let errors = ErrorBreakdown {
                    series: series_err,
                    quadrature: rem.quadrature,
                    discretization: rem.discretization,
                    truncation: rem.truncation,
                };
                Ok(PointResult {
                    x: x.clone(),
                    c,
                    f: rem.value,
                    h,
                    g: h + source,
                    source,
                    err_est: errors.total(),
                    errors,
                    aliased: rem.aliased,
                })
            })
            .collect();
        Ok(DeconvResult {
            engine,
            subcritical: self.is_subcritical(),
            sigma: self.sigma.clone(),
            g_hat0: self.g_hat0,
            k_ir: self.k_ir,
            points: rows.into_iter().collect::<Result<_>>()?,
            notes: remainder.notes,
        })
    }
}

/// Engine that produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Radial,
    Fft,
}

/// Per-point remainder value from an engine.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub(crate) struct RemainderValue {
    pub value: f64,
    pub quadrature: f64,
    pub discretization: f64,
    pub truncation: f64,
    pub aliased: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub(crate) struct RemainderValues {
    pub values: Vec<RemainderValue>,
    pub notes: Vec<String>,
}

/// Components of the per-point error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ErrorBreakdown {
    /// `ĝ(0)` times the series tail bound of `C`.
    pub series: f64,
    /// Quadrature error and rounding floor of the remainder transform.
    pub quadrature: f64,
    /// Grid discretization (Richardson pair) estimate.
    pub discretization: f64,
    /// Bound on the neglected `|k| > K_max` region.
    pub truncation: f64,
}

impl ErrorBreakdown {
    pub fn total(&self) -> f64 {
        self.series + self.quadrature + self.discretization + self.truncation
    }
}

/// Values at one point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointResult {
    pub x: Vec<f64>,
    /// Walk series `C(x)` (0 in subcritical mode).
    pub c: f64,
    /// Remainder `f(x)` (equals `H` in subcritical mode).
    pub f: f64,
    /// `H = ĝ(0)·C + f`.
    pub h: f64,
    /// `G = H + g`.
    pub g: f64,
    /// The source term `g(x)`.
    pub source: f64,
    pub err_est: f64,
    pub errors: ErrorBreakdown,
    /// The point lies beyond a third of the grid half-period on some axis.
    pub aliased: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeconvResult {
    pub engine: EngineKind,
    pub subcritical: bool,
    pub sigma: DiagonalCovariance,
    pub g_hat0: f64,
    pub k_ir: f64,
    pub points: Vec<PointResult>,
    /// Diagnostics such as a non-convergent Richardson pair.
    pub notes: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::DiagonalCovariance as Cov;
    use proptest::prelude::*;

    fn mixture(d: usize, pairs: &[(f64, Vec<f64>)]) -> Kernel {
        GaussianMixtureKernel::from_pairs(
            d,
            pairs
                .iter()
                .map(|(w, s)| (*w, Cov::new(s.clone()).unwrap()))
                .collect(),
        )
        .unwrap()
        .into()
    }

    fn perturbed(d: usize) -> Kernel {
        mixture(d, &[(1.25, vec![1.0; d]), (-0.25, vec![2.0; d])])
    }

    fn quick() -> SolverSettings {
        SolverSettings {
            infrared: InfraredGrid {
                radii: 128,
                random_directions: 8,
                ..InfraredGrid::default()
            },
            ..SolverSettings::default()
        }
    }

    #[test]
    fn sigma_examples() {
        let j = mixture(3, &[(1.0, vec![1.0, 2.0, 3.0])]);
        assert_eq!(derive_sigma(&j).unwrap().entries(), &[1.0, 2.0, 3.0]);
        let s = derive_sigma(&perturbed(5)).unwrap();
        assert!(s.entries().iter().all(|v| (v - 0.75).abs() < 1e-15));
        let bad = mixture(3, &[(1.6, vec![1.0; 3]), (-0.6, vec![4.0; 3])]);
        assert!(matches!(derive_sigma(&bad), Err(Error::NonPositiveSigma { .. })));
    }

    #[test]
    fn e_hat_vanishes_for_gaussian_walk() {
        let d = mixture(3, &[(1.0, vec![1.0, 2.0, 0.5])]);
        let p = DeconvProblem::new(d.clone(), d, quick()).unwrap();
        for k in [[0.0, 0.0, 0.0], [0.3, -1.0, 2.0], [5.0, 0.1, 0.0]] {
            assert_eq!(p.e_hat(&k).unwrap(), 0.0);
        }
        assert_eq!(p.f_hat(&[0.1, 0.2, 0.3]).unwrap(), 0.0);
        assert!(p.f_hat(&[0.0; 3]).is_err());
    }

    #[test]
    fn e_hat_small_k_slope() {
        let p = DeconvProblem::new(perturbed(5), perturbed(5), quick()).unwrap();
        assert_eq!(p.e_hat(&[0.0; 5]).unwrap(), 0.0);
        let e = |t: f64| p.e_hat(&[t, 0.0, 0.0, 0.0, 0.0]).unwrap().abs();
        let slope = (e(1e-1).ln() - e(1e-3).ln()) / ((1e-1f64).ln() - (1e-3f64).ln());
        // mixtures give |Ê| ~ |k|⁴; ε = 1 → threshold 2 + ε/2
        assert!(slope >= 2.5, "{slope}");
    }

    #[test]
    fn f_hat_bounded_by_infrared_constants() {
        let j = mixture(3, &[(1.2, vec![1.0, 2.0, 0.5]), (-0.2, vec![2.0, 1.0, 1.0])]);
        let g = mixture(3, &[(1.0, vec![0.7, 0.7, 1.4])]);
        let p = DeconvProblem::new(j, g, quick()).unwrap();
        let bound = 1.0 / (p.k_ir() * p.k_ir_sigma());
        for k in [[1.0, 0.0, 0.0], [0.0, 2.0, 1.0], [3.0, -3.0, 0.5]] {
            assert!(p.f_hat(&k).unwrap().abs() <= bound * p.e_hat(&k).unwrap().abs() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn requires_criticality_unless_flagged() {
        let j = mixture(3, &[(0.9, vec![1.0; 3])]);
        let g = mixture(3, &[(1.0, vec![1.0; 3])]);
        assert!(matches!(
            DeconvProblem::new(j.clone(), g.clone(), quick()),
            Err(Error::NotCritical { .. })
        ));
        let settings = SolverSettings {
            subcritical: true,
            ..quick()
        };
        assert!(DeconvProblem::new(j, g, settings).is_ok());
    }

    #[test]
    fn common_shape_detection() {
        let p = DeconvProblem::new(perturbed(3), mixture(3, &[(1.0, vec![3.0; 3])]), quick()).unwrap();
        assert_eq!(p.common_shape(), Some(Cov::identity(3)));
        let j = mixture(3, &[(1.0, vec![1.0, 1.0, 4.0])]);
        let p = DeconvProblem::new(j.clone(), mixture(3, &[(1.0, vec![2.0, 2.0, 8.0])]), quick()).unwrap();
        assert_eq!(p.common_shape().unwrap().entries(), &[1.0, 1.0, 4.0]);
        let p = DeconvProblem::new(j, mixture(3, &[(1.0, vec![1.0; 3])]), quick()).unwrap();
        assert!(p.common_shape().is_none());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn decomposition_matches_h_hat(
            k in proptest::collection::vec(-3.0f64..3.0, 3),
            wj in 0.0f64..0.3,
            sj in proptest::collection::vec(0.3f64..3.0, 3),
            sg in proptest::collection::vec(0.3f64..3.0, 3),
        ) {
            let norm: f64 = k.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assume!(norm > 1e-2);
            let j = mixture(3, &[(1.0 + wj, sj.clone()), (-wj, sj.iter().map(|v| 1.5 * v).collect())]);
            let g = mixture(3, &[(0.7, sg.clone()), (0.6, sg.iter().map(|v| 0.5 * v).collect())]);
            let p = DeconvProblem::new(j, g, quick());
            prop_assume!(p.is_ok());
            let p = p.unwrap();
            let direct = p.h_hat(&k).unwrap();
            let split = p.g_hat0() * p.c_hat(&k) + p.f_hat(&k).unwrap();
            prop_assert!((direct - split).abs() <= 1e-12 * direct.abs().max(p.g_hat0() * p.c_hat(&k)), "{direct} {split}");
        }
    }
}
