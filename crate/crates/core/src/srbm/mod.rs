//! Monte Carlo for the self-repellent Brownian motion: Brownian paths on
//! `[0, N]` reweighted by `e^{−αH_N}`, where `H_N` sums the time-integrated
//! pair interaction `V(Bᵢ, Bⱼ) = ∫₀¹ v(|Bᵢ(s) − Bⱼ(s)|) ds` over all legs
//! `i < j`.

mod estimate;
mod path;

pub use estimate::{
    amplitude_consistency, bin_average_phi, c_phi, check_domination, estimate_lambda_c,
    gamma_from_ensemble, phi, sample_gamma, AmplitudeProxy, AmplitudeReport, DensityProbe,
    DominationProbe, DominationReport, GammaEstimate, LambdaEstimate,
};
pub use path::{hamiltonian, Path, PathEnsemble};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Smallest effective sample size accepted by the estimators.
pub const MIN_EFFECTIVE_SAMPLE_SIZE: f64 = 100.0;

/// Truncated-triangle interaction `v(r) = v₀·max(0, 1 − r/r₀)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    v0: f64,
    r0: f64,
}

impl Interaction {
    pub fn new(v0: f64, r0: f64) -> Result<Self> {
        if !(v0 >= 0.0 && v0.is_finite()) {
            return Err(Error::InvalidArgument {
                name: "v0",
                reason: format!("{v0} must be finite and nonnegative"),
            });
        }
        if !(r0 > 0.0 && r0.is_finite()) {
            return Err(Error::InvalidArgument {
                name: "r0",
                reason: format!("{r0} must be finite and positive"),
            });
        }
        Ok(Self { v0, r0 })
    }

    pub fn value(&self, r: f64) -> f64 {
        self.v0 * (1.0 - r / self.r0).max(0.0)
    }
}

/// How `Γ_{α,N}` is estimated from the endpoint sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityMethod {
    /// Shell histogram centred on each probe radius (the marginal is isotropic).
    #[default]
    Histogram,
    /// Gaussian kernel density estimate at `r·e₁` with Silverman's bandwidth.
    Kde,
}

/// Monte Carlo configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SrbmConfig {
    pub dim: usize,
    pub alpha: f64,
    /// Number of unit-time legs `N`.
    pub legs: usize,
    /// Time substeps per leg `m` (midpoint rule for `V`).
    pub substeps: usize,
    pub v0: f64,
    pub r0: f64,
    pub paths: usize,
    pub seed: u64,
    pub batch_size: usize,
    /// Probe radii for density estimates.
    pub probes: Vec<f64>,
    /// Shell width of the histogram estimator.
    pub bin_width: f64,
    pub density: DensityMethod,
}

impl Default for SrbmConfig {
    fn default() -> Self {
        Self {
            dim: 5,
            alpha: 0.0,
            legs: 4,
            substeps: 16,
            v0: 1.0,
            r0: 1.0,
            paths: 100_000,
            seed: 1,
            batch_size: 4096,
            probes: (0..20).map(|i| (10 + 4 * i) as f64 / 10.0).collect(),
            bin_width: 0.4,
            density: DensityMethod::Histogram,
        }
    }
}

impl SrbmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: String| Err(Error::InvalidArgument { name, reason });
        if self.dim < 5 {
            return bad("dim", format!("the model is studied in d >= 5, got {}", self.dim));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha", format!("{} must be finite and nonnegative", self.alpha));
        }
        if self.legs == 0 {
            return bad("legs", "need at least one leg".into());
        }
        if self.substeps < 8 {
            return bad("substeps", format!("{} < 8", self.substeps));
        }
        if self.paths < 2 {
            return bad("paths", "need at least two paths".into());
        }
        if !(self.bin_width > 0.0) {
            return bad("bin_width", format!("{} must be positive", self.bin_width));
        }
        if self.probes.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return bad("probes", "probe radii must be finite and nonnegative".into());
        }
        Interaction::new(self.v0, self.r0).map(|_| ())
    }

    pub fn interaction(&self) -> Interaction {
        Interaction {
            v0: self.v0,
            r0: self.r0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interaction_profile() {
        let v = Interaction::new(2.0, 1.5).unwrap();
        assert_eq!(v.value(0.0), 2.0);
        assert!((v.value(0.75) - 1.0).abs() < 1e-15);
        assert_eq!(v.value(1.5), 0.0);
        assert_eq!(v.value(10.0), 0.0);
        assert!(Interaction::new(-1.0, 1.0).is_err());
        assert!(Interaction::new(1.0, 0.0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SrbmConfig::default().validate().is_ok());
        for bad in [
            SrbmConfig { dim: 4, ..SrbmConfig::default() },
            SrbmConfig { substeps: 4, ..SrbmConfig::default() },
            SrbmConfig { alpha: -0.1, ..SrbmConfig::default() },
            SrbmConfig { legs: 0, ..SrbmConfig::default() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::InvalidArgument { .. })));
        }
    }
}
