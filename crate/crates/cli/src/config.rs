//! TOML run configurations. Every table rejects unknown keys so that typos
//! fail loudly instead of silently falling back to defaults.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use gaussdeconv::assumptions::{criticalize, CheckConfig};
use gaussdeconv::asymptotics::{scan_points, ScanTolerances};
use gaussdeconv::deconv::{DirectQuadratureSettings, SolverSettings};
use gaussdeconv::kernel::Interpolation;
use gaussdeconv::srbm::{AmplitudeProxy, SrbmConfig};
use gaussdeconv::{DiagonalCovariance, GaussianMixtureKernel, Kernel, RadialTabulatedKernel};

/// Read and parse a TOML file; parse errors carry the offending key and line.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config file `{}`", path.display()))?;
    toml::from_str(&text).with_context(|| format!("invalid config file `{}`", path.display()))
}

/// Kernel description, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    Mixture(MixtureSpec),
    Tabulated(TabulatedSpec),
}

/// `scale · Σ wᵢ N(0, Σᵢ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub dim: usize,
    pub components: Vec<ComponentSpec>,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub weight: f64,
    /// A single variance (isotropic) or the `d` diagonal entries.
    pub covariance: CovarianceSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CovarianceSpec {
    Isotropic(f64),
    Diagonal(Vec<f64>),
}

/// Radial table with a power-law tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabulatedSpec {
    pub dim: usize,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    #[serde(default)]
    pub interpolation: Interpolation,
    pub tail_exponent: f64,
}

impl KernelSpec {
    pub fn dim(&self) -> usize {
        match self {
            KernelSpec::Mixture(m) => m.dim,
            KernelSpec::Tabulated(t) => t.dim,
        }
    }

    /// Build and validate the kernel; `key` names the config table in errors.
    pub fn build(&self, key: &str) -> Result<Kernel> {
        match self {
            KernelSpec::Mixture(m) => {
                if m.components.is_empty() {
                    bail!("`{key}.components` must list at least one component");
                }
                let pairs = m
                    .components
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        let cov = match &c.covariance {
                            CovarianceSpec::Isotropic(s) => {
                                DiagonalCovariance::new(vec![*s; m.dim])
                            }
                            CovarianceSpec::Diagonal(entries) => {
                                if entries.len() != m.dim {
                                    bail!(
                                        "`{key}.components[{i}].covariance` has {} entries but `{key}.dim` is {}",
                                        entries.len(),
                                        m.dim
                                    );
                                }
                                DiagonalCovariance::new(entries.clone())
                            }
                        }
                        .with_context(|| format!("`{key}.components[{i}].covariance`"))?;
                        Ok((c.weight, cov))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let kernel = GaussianMixtureKernel::from_pairs(m.dim, pairs)
                    .with_context(|| format!("kernel `{key}`"))?;
                Ok(kernel.scaled(m.scale).into())
            }
            KernelSpec::Tabulated(t) => RadialTabulatedKernel::new(
                t.dim,
                t.radii.clone(),
                t.values.clone(),
                t.interpolation,
                t.tail_exponent,
            )
            .map(Kernel::from)
            .with_context(|| format!("kernel `{key}`")),
        }
    }
}

/// Direction scan: every radius along every direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    pub directions: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleMethod {
    /// Direct quadrature of `Ĥ` (d = 3).
    #[default]
    Quadrature,
    /// Neumann series in the step density (commensurate mixtures).
    Series,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSpec {
    pub method: OracleMethod,
    pub quadrature: DirectQuadratureSettings,
}

/// Configuration shared by `check-assumptions`, `solve`, `oracle` and
/// `validate-asymptotics`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    /// Divide `J` by `Ĵ(0)` before use.
    #[serde(default)]
    pub criticalize: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<Vec<f64>>,
    pub j: KernelSpec,
    pub g: KernelSpec,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub check: CheckConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanSpec>,
    #[serde(default)]
    pub oracle: OracleSpec,
    #[serde(default)]
    pub tolerances: ScanTolerances,
}

impl ProblemConfig {
    pub fn dim(&self) -> usize {
        self.j.dim()
    }

    /// `(J, g)` after validation and optional criticalization.
    pub fn kernels(&self) -> Result<(Kernel, Kernel)> {
        if self.j.dim() != self.g.dim() {
            bail!(
                "`j.dim` = {} and `g.dim` = {} differ",
                self.j.dim(),
                self.g.dim()
            );
        }
        let mut j = self.j.build("j")?;
        if self.criticalize {
            j = criticalize(&j).context("`criticalize`")?;
        }
        Ok((j, self.g.build("g")?))
    }

    /// `points` followed by the scan points, in that order.
    pub fn evaluation_points(&self) -> Result<Vec<Vec<f64>>> {
        let d = self.dim();
        for (i, p) in self.points.iter().enumerate() {
            if p.len() != d {
                bail!("`points[{i}]` has {} coordinates, expected {d}", p.len());
            }
        }
        let mut points = self.points.clone();
        if let Some(scan) = &self.scan {
            self.check_scan(scan)?;
            points.extend(scan_points(&scan.directions, &scan.radii).context("`scan`")?);
        }
        if points.is_empty() {
            bail!("no evaluation points: set `points` or a `[scan]` table");
        }
        Ok(points)
    }

    pub fn check_scan(&self, scan: &ScanSpec) -> Result<()> {
        let d = self.dim();
        for (i, v) in scan.directions.iter().enumerate() {
            if v.len() != d {
                bail!("`scan.directions[{i}]` has {} coordinates, expected {d}", v.len());
            }
        }
        if scan.radii.is_empty() {
            bail!("`scan.radii` is empty");
        }
        Ok(())
    }
}

/// Configuration of `walk-c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkConfig {
    pub rel_tol: f64,
    /// Diagonal of `Σ`.
    pub sigma: Vec<f64>,
    /// Evaluation points; empty means the origin.
    #[serde(default)]
    pub points: Vec<Vec<f64>>,
}

impl WalkConfig {
    pub fn covariance(&self) -> Result<DiagonalCovariance> {
        DiagonalCovariance::new(self.sigma.clone()).context("`sigma`")
    }

    pub fn evaluation_points(&self) -> Result<Vec<Vec<f64>>> {
        let d = self.sigma.len();
        if self.points.is_empty() {
            return Ok(vec![vec![0.0; d]]);
        }
        for (i, p) in self.points.iter().enumerate() {
            if p.len() != d {
                bail!("`points[{i}]` has {} coordinates, expected {d}", p.len());
            }
        }
        Ok(self.points.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SrbmTask {
    /// Endpoint density `Γ_{α,N}` at the probe radii.
    #[default]
    Gamma,
    /// Critical fugacity from the growth of `‖Γ_{α,n}‖₁`.
    Lambda,
    /// `Σₙ λⁿ Γ_{α,n}` against `5·C_φ`.
    Domination,
    /// Amplitude of a Gaussian-like lace-expansion proxy.
    Amplitude,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LambdaSpec {
    pub n_max: usize,
}

impl Default for LambdaSpec {
    fn default() -> Self {
        Self { n_max: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DominationSpec {
    pub n_max: usize,
    /// Fugacity; when absent, `lambda_factor · λ̂_c` with `λ̂_c` estimated first.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub lambda_factor: f64,
}

impl Default for DominationSpec {
    fn default() -> Self {
        Self {
            n_max: 10,
            lambda: None,
            lambda_factor: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplitudeSpec {
    pub perturbation: KernelSpec,
    pub alpha_tilde: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default = "default_probe_radius")]
    pub probe_radius: f64,
}

fn default_probe_radius() -> f64 {
    30.0
}

impl AmplitudeSpec {
    pub fn proxy(&self) -> Result<AmplitudeProxy> {
        let kernel = self.perturbation.build("amplitude.perturbation")?;
        let Some(perturbation) = kernel.as_mixture().cloned() else {
            bail!("`amplitude.perturbation` must be a mixture kernel");
        };
        Ok(AmplitudeProxy {
            perturbation,
            alpha_tilde: self.alpha_tilde,
            lambda: self.lambda,
            probe_radius: self.probe_radius,
        })
    }
}

/// Configuration of `srbm`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SrbmRunConfig {
    #[serde(default)]
    pub task: SrbmTask,
    #[serde(default)]
    pub model: SrbmConfig,
    #[serde(default)]
    pub lambda: LambdaSpec,
    #[serde(default)]
    pub domination: DominationSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<AmplitudeSpec>,
}
