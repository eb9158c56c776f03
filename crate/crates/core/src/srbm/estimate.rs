//! Estimators built on a [`PathEnsemble`]: the endpoint density `Γ_{α,N}`,
//! the critical fugacity `λ_c`, the Gaussian domination bound and the
//! amplitude of a proxy critical kernel.

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

use super::path::mean_and_stderr;
use super::{DensityMethod, PathEnsemble, SrbmConfig, MIN_EFFECTIVE_SAMPLE_SIZE};
use crate::deconv::{derive_sigma, DeconvProblem, SolverSettings};
use crate::gausswalk::walk_c;
use crate::kernel::{DiagonalCovariance, GaussianMixtureKernel, Kernel};
use crate::quadrature::gauss_legendre;
use crate::special::{newtonian_constant, sphere_area};
use crate::{Error, Result};

/// `φ_t(x) = (2πt)^{−d/2} exp(−|x|²/2t)`.
pub fn phi(t: f64, x: &[f64]) -> f64 {
    let d = x.len() as f64;
    let r2: f64 = x.iter().map(|v| v * v).sum();
    (2.0 * std::f64::consts::PI * t).powf(-d / 2.0) * (-r2 / (2.0 * t)).exp()
}

fn shell_volume(d: usize, lo: f64, hi: f64) -> f64 {
    sphere_area(d) / d as f64 * (hi.powi(d as i32) - lo.powi(d as i32))
}

/// Average of `φ_t` over the shell `lo ≤ |x| < hi`, exactly, through the
/// chi-square law of `|x|²/t`.
pub fn bin_average_phi(d: usize, t: f64, lo: f64, hi: f64) -> Result<f64> {
    let chi = ChiSquared::new(d as f64).map_err(|e| Error::InvalidArgument {
        name: "dim",
        reason: e.to_string(),
    })?;
    let mass = chi.cdf(hi * hi / t) - chi.cdf(lo * lo / t);
    Ok(mass / shell_volume(d, lo, hi))
}

/// `C_φ(x) = Σ_{n≥1} φ_n(x)`: the walk series with `Σ = Id` plus the `n = 1` term.
pub fn c_phi(x: &[f64]) -> Result<f64> {
    let sigma = DiagonalCovariance::identity(x.len());
    Ok(phi(1.0, x) + walk_c(&sigma, x, 1e-10)?.value)
}

/// Shell average of `C_φ` over `lo ≤ |x| < hi`.
fn bin_average_c_phi(d: usize, lo: f64, hi: f64) -> Result<f64> {
    let (nodes, weights) = gauss_legendre(16);
    let half = 0.5 * (hi - lo);
    let mut acc = 0.0;
    let mut x = vec![0.0; d];
    for (t, w) in nodes.iter().zip(&weights) {
        let r = lo + half * (t + 1.0);
        x[0] = r;
        acc += w * half * r.powi(d as i32 - 1) * c_phi(&x)?;
    }
    Ok(acc * sphere_area(d) / shell_volume(d, lo, hi))
}

fn bin(r: f64, width: f64) -> (f64, f64) {
    ((r - 0.5 * width).max(0.0), r + 0.5 * width)
}

fn require_ess(ensemble: &PathEnsemble, n: usize) -> Result<f64> {
    let ess = ensemble.effective_sample_size(n);
    if ess < MIN_EFFECTIVE_SAMPLE_SIZE {
        return Err(Error::EffectiveSampleSize {
            ess,
            minimum: MIN_EFFECTIVE_SAMPLE_SIZE,
        });
    }
    Ok(ess)
}

/// Density estimate at one probe radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityProbe {
    pub radius: f64,
    pub estimate: f64,
    pub stderr: f64,
    /// Wiener reference: the shell average of `φ_N` (histogram) or `φ_{N+h²}`
    /// at the probe (kernel estimate).
    pub reference: f64,
    /// Kernel estimate at the mirrored probe `−r·e₁`.
    pub mirrored: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaEstimate {
    pub legs: usize,
    pub method: DensityMethod,
    pub bandwidth: Option<f64>,
    pub probes: Vec<DensityProbe>,
    /// `∫Γ_{α,N} = E[e^{−αH_N}]`.
    pub mean_weight: f64,
    pub mean_weight_stderr: f64,
    pub effective_sample_size: f64,
}

/// Estimate `Γ_{α,n}` at the probes of `config` from an existing ensemble.
pub fn gamma_from_ensemble(
    ensemble: &PathEnsemble,
    n: usize,
    config: &SrbmConfig,
) -> Result<GammaEstimate> {
    if n == 0 || n > ensemble.legs() {
        return Err(Error::InvalidArgument {
            name: "legs",
            reason: format!("n = {n} outside 1..={}", ensemble.legs()),
        });
    }
    let ess = require_ess(ensemble, n)?;
    let d = ensemble.dim();
    let paths = ensemble.paths();
    let weights = ensemble.weights(n);
    let (mean_weight, mean_weight_stderr) = mean_and_stderr(&weights);
    let t = n as f64;
    let (probes, bandwidth) = match config.density {
        DensityMethod::Histogram => {
            let radii: Vec<f64> = (0..paths)
                .map(|p| ensemble.endpoint(p, n).iter().map(|v| v * v).sum::<f64>().sqrt())
                .collect();
            let probes = config
                .probes
                .par_iter()
                .map(|&r| {
                    let (lo, hi) = bin(r, config.bin_width);
                    let vol = shell_volume(d, lo, hi);
                    let contrib: Vec<f64> = radii
                        .iter()
                        .zip(&weights)
                        .map(|(rho, w)| if *rho >= lo && *rho < hi { w / vol } else { 0.0 })
                        .collect();
                    let (estimate, stderr) = mean_and_stderr(&contrib);
                    Ok(DensityProbe {
                        radius: r,
                        estimate,
                        stderr,
                        reference: bin_average_phi(d, t, lo, hi)?,
                        mirrored: None,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (probes, None)
        }
        DensityMethod::Kde => {
            let total: f64 = weights.iter().sum();
            let var = (0..paths)
                .map(|p| weights[p] * ensemble.endpoint(p, n).iter().map(|v| v * v).sum::<f64>())
                .sum::<f64>()
                / (total * d as f64);
            let h = var.sqrt() * (4.0 / ((d as f64 + 2.0) * ess)).powf(1.0 / (d as f64 + 4.0));
            let h2 = h * h;
            let kde = |x: &[f64]| -> (f64, f64) {
                let contrib: Vec<f64> = (0..paths)
                    .map(|p| {
                        let diff: Vec<f64> =
                            ensemble.endpoint(p, n).iter().zip(x).map(|(b, y)| y - b).collect();
                        weights[p] * phi(h2, &diff)
                    })
                    .collect();
                mean_and_stderr(&contrib)
            };
            let probes = config
                .probes
                .par_iter()
                .map(|&r| {
                    let mut x = vec![0.0; d];
                    x[0] = r;
                    let (estimate, stderr) = kde(&x);
                    x[0] = -r;
                    let (mirror, _) = kde(&x);
                    Ok(DensityProbe {
                        radius: r,
                        estimate,
                        stderr,
                        reference: phi(t + h2, &x),
                        mirrored: Some(mirror),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (probes, Some(h))
        }
    };
    Ok(GammaEstimate {
        legs: n,
        method: config.density,
        bandwidth,
        probes,
        mean_weight,
        mean_weight_stderr,
        effective_sample_size: ess,
    })
}

/// Sample `config.paths` paths with `config.legs` legs and estimate `Γ_{α,N}`.
pub fn sample_gamma(config: &SrbmConfig) -> Result<GammaEstimate> {
    let ensemble = PathEnsemble::sample(config)?;
    gamma_from_ensemble(&ensemble, config.legs, config)
}

/// Regression of `log ‖Γ_{α,n}‖₁` on `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaEstimate {
    pub lambda_c: f64,
    /// 95% interval from the Student-t distribution of the slope.
    pub ci_low: f64,
    pub ci_high: f64,
    /// `(n, mean weight, standard error)`.
    pub mean_weights: Vec<(usize, f64, f64)>,
    pub slope: f64,
    pub slope_stderr: f64,
    /// Whether the mean weights are non-increasing in `n`.
    pub monotone: bool,
}

/// `‖Γ_{α,n}‖₁ ≈ A·λ_c^{−n}`; `λ_c = e^{−slope}`.
pub fn estimate_lambda_c(config: &SrbmConfig, n_max: usize) -> Result<LambdaEstimate> {
    if n_max < 3 {
        return Err(Error::InvalidArgument {
            name: "n_max",
            reason: format!("need at least 3 values of N for a regression, got {n_max}"),
        });
    }
    let config = SrbmConfig {
        legs: n_max,
        ..config.clone()
    };
    let ensemble = PathEnsemble::sample(&config)?;
    lambda_from_ensemble(&ensemble)
}

fn lambda_from_ensemble(ensemble: &PathEnsemble) -> Result<LambdaEstimate> {
    let n_max = ensemble.legs();
    let mut mean_weights = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        require_ess(ensemble, n)?;
        let (m, se) = ensemble.mean_weight(n);
        mean_weights.push((n, m, se));
    }
    let xs: Vec<f64> = mean_weights.iter().map(|(n, _, _)| *n as f64).collect();
    let ys: Vec<f64> = mean_weights.iter().map(|(_, m, _)| m.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let slope_stderr = (rss / (k - 2.0) / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, k - 2.0)
        .map_err(|e| Error::InvalidArgument {
            name: "n_max",
            reason: e.to_string(),
        })?
        .inverse_cdf(0.975);
    let monotone = mean_weights.windows(2).all(|w| w[1].1 <= w[0].1);
    Ok(LambdaEstimate {
        lambda_c: (-slope).exp(),
        ci_low: (-(slope + t * slope_stderr)).exp(),
        ci_high: (-(slope - t * slope_stderr)).exp(),
        mean_weights,
        slope,
        slope_stderr,
        monotone,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DominationProbe {
    pub radius: f64,
    /// Shell average of `Σ_{n≤N_max} λⁿ Γ̂_{α,n}`.
    pub estimate: f64,
    pub stderr: f64,
    /// Shell average of `5·C_φ`.
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominationReport {
    pub lambda: f64,
    pub n_max: usize,
    pub probes: Vec<DominationProbe>,
    pub min_effective_sample_size: f64,
    pub pass: bool,
}

/// Compare the truncated two-point function with `5·C_φ` at the probe shells;
/// a probe passes when `estimate − 2·stderr ≤ bound`.
pub fn check_domination(config: &SrbmConfig, lambda: f64, n_max: usize) -> Result<DominationReport> {
    if !(lambda > 0.0 && lambda.is_finite()) || n_max == 0 {
        return Err(Error::InvalidArgument {
            name: "lambda",
            reason: format!("need λ > 0 and N_max >= 1, got λ = {lambda}, N_max = {n_max}"),
        });
    }
    let config = SrbmConfig {
        legs: n_max,
        ..config.clone()
    };
    let ensemble = PathEnsemble::sample(&config)?;
    domination_from_ensemble(&ensemble, &config, lambda)
}

fn domination_from_ensemble(
    ensemble: &PathEnsemble,
    config: &SrbmConfig,
    lambda: f64,
) -> Result<DominationReport> {
    let n_max = ensemble.legs();
    let d = ensemble.dim();
    let min_ess = (1..=n_max)
        .map(|n| require_ess(ensemble, n))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let paths = ensemble.paths();
    // Per path and leg count: λⁿ·weight and |B(n)|.
    let terms: Vec<(f64, f64)> = (0..paths)
        .flat_map(|p| {
            (1..=n_max).map(move |n| {
                let r = ensemble.endpoint(p, n).iter().map(|v| v * v).sum::<f64>().sqrt();
                (lambda.powi(n as i32) * ensemble.weight(p, n), r)
            })
        })
        .collect();
    let probes = config
        .probes
        .par_iter()
        .map(|&r| {
            let (lo, hi) = bin(r, config.bin_width);
            let vol = shell_volume(d, lo, hi);
            let contrib: Vec<f64> = terms
                .chunks_exact(n_max)
                .map(|path| {
                    path.iter()
                        .filter(|(_, rho)| *rho >= lo && *rho < hi)
                        .map(|(w, _)| w / vol)
                        .sum()
                })
                .collect();
            let (estimate, stderr) = mean_and_stderr(&contrib);
            let bound = 5.0 * bin_average_c_phi(d, lo, hi)?;
            Ok(DominationProbe {
                radius: r,
                estimate,
                stderr,
                bound,
                pass: estimate - 2.0 * stderr <= bound,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pass = probes.iter().all(|p| p.pass);
    Ok(DominationReport {
        lambda,
        n_max,
        probes,
        min_effective_sample_size: min_ess,
        pass,
    })
}

/// Proxy critical kernel `J = λ·φ₁ + Π̃` built from a user perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplitudeProxy {
    /// Even perturbation `Π̃` (Gaussian mixture).
    pub perturbation: GaussianMixtureKernel,
    /// Declared perturbation scale `α̃`; `‖Π̃‖₁` must not exceed it.
    pub alpha_tilde: f64,
    /// `λ`; defaults to `1 − Π̃̂(0)`, which makes `J` critical.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Radius along `e₁` at which the prefactor is measured.
    #[serde(default = "default_probe_radius")]
    pub probe_radius: f64,
}

fn default_probe_radius() -> f64 {
    30.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmplitudeReport {
    pub lambda: f64,
    /// `λ + ∫x₁²Π̃` from the perturbation's moments.
    pub sigma2_moment: f64,
    /// `Σ₁₁` from the assembled kernel.
    pub sigma2_derived: f64,
    pub a_d: f64,
    /// `ĝ(0)·a_d/√det Σ · Σ₁₁^{(d−2)/2}`: the `|x|^{d−2}` prefactor along `e₁`
    /// (`a_d/σ²` for isotropic `Σ = σ² Id`).
    pub predicted: f64,
    /// `r^{d−2}·G(r·e₁)` from the deconvolution solver.
    pub measured: f64,
    pub band: (f64, f64),
    pub within_band: bool,
}

/// Solve the proxy problem `J = g = λφ₁ + Π̃` and check that the measured
/// amplitude lies in `[a_d(1 − 5α̃), a_d(1 + 5α̃)]`.
pub fn amplitude_consistency(proxy: &AmplitudeProxy) -> Result<AmplitudeReport> {
    let pert = &proxy.perturbation;
    let d = pert.dim();
    if d < 3 {
        return Err(Error::DimensionTooSmall(d));
    }
    if !(proxy.alpha_tilde >= 0.0) {
        return Err(Error::InvalidArgument {
            name: "alpha_tilde",
            reason: format!("{} must be nonnegative", proxy.alpha_tilde),
        });
    }
    let shape_power = 3.0 * (d as f64 - 2.0);
    if !Kernel::from(pert.clone()).decays_at_least(shape_power) || !pert.fourier(&vec![0.0; d]).is_finite() {
        return Err(Error::InvalidKernel(format!(
            "perturbation must decay at least like (1+|x|)^-{shape_power}"
        )));
    }
    if pert.abs_weight() > proxy.alpha_tilde * (1.0 + 1e-12) {
        return Err(Error::InvalidKernel(format!(
            "perturbation L1 norm {} exceeds the declared scale {}",
            pert.abs_weight(),
            proxy.alpha_tilde
        )));
    }
    let lambda = proxy.lambda.unwrap_or(1.0 - pert.mass());
    let j = GaussianMixtureKernel::standard_gaussian(d).combine(lambda, pert, 1.0)?;
    let sigma2_moment = lambda + pert.second_moments()[0];
    let kernel: Kernel = j.into();
    let sigma = derive_sigma(&kernel)?;
    let problem = DeconvProblem::new(kernel.clone(), kernel, SolverSettings::default())?;
    let r = proxy.probe_radius;
    let mut x = vec![0.0; d];
    x[0] = r;
    let point = problem.solve(&[x])?.points.remove(0);
    let measured = r.powi(d as i32 - 2) * point.g;
    let a_d = newtonian_constant(d);
    let predicted = problem.g_hat0() * a_d / sigma.determinant().sqrt()
        * sigma.entries()[0].powf((d as f64 - 2.0) / 2.0);
    let band = (
        a_d * (1.0 - 5.0 * proxy.alpha_tilde),
        a_d * (1.0 + 5.0 * proxy.alpha_tilde),
    );
    Ok(AmplitudeReport {
        lambda,
        sigma2_moment,
        sigma2_derived: sigma.entries()[0],
        a_d,
        predicted,
        measured,
        band,
        within_band: measured >= band.0 && measured <= band.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gausswalk::walk_c;

    fn small(alpha: f64, paths: usize, seed: u64) -> SrbmConfig {
        SrbmConfig {
            alpha,
            paths,
            seed,
            legs: 4,
            ..SrbmConfig::default()
        }
    }

    #[test]
    fn bin_average_matches_quadrature() {
        let (d, t, lo, hi) = (5usize, 4.0, 2.0, 2.5);
        let (nodes, weights) = gauss_legendre(20);
        let half = 0.5 * (hi - lo);
        let mut x = vec![0.0; d];
        let quad: f64 = nodes
            .iter()
            .zip(&weights)
            .map(|(s, w)| {
                let r = lo + half * (s + 1.0);
                x[0] = r;
                w * half * r.powi(4) * phi(t, &x)
            })
            .sum::<f64>()
            * sphere_area(d)
            / shell_volume(d, lo, hi);
        let exact = bin_average_phi(d, t, lo, hi).unwrap();
        assert!((quad / exact - 1.0).abs() < 1e-12, "{quad} {exact}");
    }

    #[test]
    fn c_phi_includes_first_term() {
        let x = [1.0, 0.5, 0.0, 0.0, 0.0];
        let sum: f64 = (1..200_000).map(|n| phi(n as f64, &x)).sum();
        let tail = walk_c(&DiagonalCovariance::identity(5), &x, 1e-12).unwrap().value;
        assert!((c_phi(&x).unwrap() - (phi(1.0, &x) + tail)).abs() < 1e-15);
        assert!((c_phi(&x).unwrap() / sum - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_alpha_has_unit_weights_and_matches_wiener_marginal() {
        let cfg = small(0.0, 40_000, 11);
        let est = sample_gamma(&cfg).unwrap();
        assert_eq!(est.mean_weight, 1.0);
        assert_eq!(est.mean_weight_stderr, 0.0);
        for p in &est.probes {
            assert!((p.estimate - p.reference).abs() <= 4.0 * p.stderr, "{p:?}");
        }
    }

    #[test]
    fn kde_is_symmetric_and_unbiased_against_smoothed_reference() {
        let cfg = SrbmConfig {
            density: DensityMethod::Kde,
            probes: vec![0.0, 1.0, 2.0, 4.0],
            ..small(0.0, 20_000, 5)
        };
        let est = sample_gamma(&cfg).unwrap();
        assert!(est.bandwidth.unwrap() > 0.0);
        for p in &est.probes {
            assert!((p.estimate - p.reference).abs() <= 4.0 * p.stderr, "{p:?}");
            assert!((p.estimate - p.mirrored.unwrap()).abs() <= 6.0 * p.stderr, "{p:?}");
        }
    }

    #[test]
    fn weights_shrink_with_alpha_and_total_mass_below_one() {
        let a = PathEnsemble::sample(&small(0.05, 2000, 3)).unwrap();
        let b = PathEnsemble::sample(&small(0.2, 2000, 3)).unwrap();
        for p in 0..2000 {
            assert!(b.weight(p, 4) <= a.weight(p, 4));
            assert!(a.weight(p, 4) <= 1.0 && a.weight(p, 4) > 0.0);
        }
        assert!(a.mean_weight(4).0 <= 1.0);
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_gamma(&small(0.1, 5000, 9)).unwrap();
        let b = sample_gamma(&small(0.1, 5000, 9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stderr_scales_with_sample_size() {
        let a = sample_gamma(&small(0.1, 20_000, 21)).unwrap();
        let b = sample_gamma(&small(0.1, 40_000, 22)).unwrap();
        let ratio: f64 = a
            .probes
            .iter()
            .zip(&b.probes)
            .map(|(p, q)| q.stderr / p.stderr)
            .sum::<f64>()
            / a.probes.len() as f64;
        assert!((ratio * 2f64.sqrt() - 1.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn lambda_c_for_zero_interaction_is_one() {
        let est = estimate_lambda_c(&small(0.0, 500, 1), 5).unwrap();
        assert_eq!(est.lambda_c, 1.0);
        assert_eq!((est.ci_low, est.ci_high), (1.0, 1.0));
        assert!(matches!(
            estimate_lambda_c(&small(0.0, 500, 1), 1),
            Err(Error::InvalidArgument { .. })
        ));
    }

    #[test]
    fn lambda_c_grows_with_repulsion() {
        // ‖Γ_{α,N}‖₁ ≤ 1, so the series Σ λᴺ‖Γ_N‖₁ converges for λ < 1: λ_c ≥ 1.
        let est = estimate_lambda_c(&small(0.1, 20_000, 4), 8).unwrap();
        assert!(est.lambda_c > 1.0 && est.ci_low > 1.0, "{est:?}");
        assert!(est.monotone);
    }

    #[test]
    fn substep_halving_changes_weights_little() {
        let coarse = PathEnsemble::sample(&SrbmConfig { substeps: 8, ..small(0.1, 20_000, 8) }).unwrap();
        let fine = PathEnsemble::sample(&SrbmConfig { substeps: 16, ..small(0.1, 20_000, 8) }).unwrap();
        let (a, sa) = coarse.mean_weight(4);
        let (b, sb) = fine.mean_weight(4);
        assert!((a - b).abs() < 4.0 * (sa + sb) + 2e-3, "{a} {b}");
    }

    #[test]
    fn domination_at_origin_without_interaction() {
        let cfg = SrbmConfig {
            probes: vec![0.5, 1.5],
            ..small(0.0, 20_000, 2)
        };
        let report = check_domination(&cfg, 0.9, 6).unwrap();
        assert!(report.pass, "{report:?}");
        // deterministic counterpart at x = 0
        let x = [0.0; 5];
        let lhs: f64 = (1..=6).map(|n| 0.9f64.powi(n) * phi(n as f64, &x)).sum();
        assert!(lhs < c_phi(&x).unwrap());
    }

    #[test]
    fn c_phi_amplitude() {
        let a5 = newtonian_constant(5);
        for r in [10.0, 20.0, 40.0] {
            let x = [r, 0.0, 0.0, 0.0, 0.0];
            assert!((c_phi(&x).unwrap() * r.powi(3) / a5 - 1.0).abs() < 0.02);
        }
    }

    #[test]
    fn amplitude_proxy_pure_gaussian() {
        let proxy = AmplitudeProxy {
            perturbation: GaussianMixtureKernel::zero(5),
            alpha_tilde: 0.0,
            lambda: None,
            probe_radius: 30.0,
        };
        let rep = amplitude_consistency(&proxy).unwrap();
        assert_eq!(rep.lambda, 1.0);
        assert!((rep.predicted - rep.a_d).abs() < 1e-15 * rep.a_d);
        assert!((rep.measured / rep.a_d - 1.0).abs() < 2e-2, "{rep:?}");
    }

    #[test]
    fn amplitude_proxy_with_perturbation() {
        let d = 5;
        let pert = GaussianMixtureKernel::from_pairs(
            d,
            vec![
                (0.03, DiagonalCovariance::scaled_identity(d, 0.5)),
                (-0.02, DiagonalCovariance::scaled_identity(d, 2.0)),
            ],
        )
        .unwrap();
        let proxy = AmplitudeProxy {
            perturbation: pert,
            alpha_tilde: 0.05,
            lambda: None,
            probe_radius: 30.0,
        };
        let rep = amplitude_consistency(&proxy).unwrap();
        assert!((rep.sigma2_moment - rep.sigma2_derived).abs() < 1e-10);
        assert!(rep.within_band, "{rep:?}");
        assert!((rep.measured / rep.predicted - 1.0).abs() < 0.02, "{rep:?}");
    }
}
