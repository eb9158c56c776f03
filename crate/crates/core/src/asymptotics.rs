//! Agreement between computed `H`, `G` and the critical asymptotic law
//!
//! `H(x) ≈ ĝ(0)·a_d/√det Σ · (x·Σ⁻¹x)^{−(d−2)/2}`,
//!
//! measured through the normalized prefactor `(x·Σ⁻¹x)^{(d−2)/2}·H(x)`, which
//! tends to the same constant along every direction.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::deconv::{DeconvProblem, DeconvResult};
use crate::gausswalk::asymptotic_amplitude;
use crate::kernel::DiagonalCovariance;
use crate::{Error, Result};

/// Minimum number of radii for a fit.
pub const MIN_RADII: usize = 4;

/// Measured prefactors along one direction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticFit {
    /// Unit direction.
    pub direction: Vec<f64>,
    pub radii: Vec<f64>,
    pub h_values: Vec<f64>,
    /// `(x·Σ⁻¹x)^{(d−2)/2}·H(x)`.
    pub prefactors: Vec<f64>,
    /// Same normalization applied to `G = H + g`.
    pub g_prefactors: Vec<f64>,
    /// `ĝ(0)·a_d/√det Σ`.
    pub predicted: f64,
    /// Least-squares slope of `log|H|` against `log r`.
    pub exponent: f64,
    /// Same for `G`.
    pub g_exponent: f64,
    /// `prefactor/predicted − 1` at the largest radius.
    pub deviation: f64,
}

impl AsymptoticFit {
    pub fn last_prefactor(&self) -> f64 {
        *self.prefactors.last().unwrap_or(&f64::NAN)
    }
}

fn log_slope(radii: &[f64], values: &[f64]) -> f64 {
    let x: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let y: Vec<f64> = values.iter().map(|v| v.abs().ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn unit(direction: &[f64]) -> Result<Vec<f64>> {
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::InvalidArgument {
            name: "direction",
            reason: "direction must be a nonzero finite vector".into(),
        });
    }
    Ok(direction.iter().map(|v| v / norm).collect())
}

fn validate_radii(radii: &[f64]) -> Result<()> {
    if radii.len() < MIN_RADII {
        return Err(Error::InvalidArgument {
            name: "radii",
            reason: format!("need at least {MIN_RADII} radii, got {}", radii.len()),
        });
    }
    if radii.iter().any(|r| !(*r > 0.0)) || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument {
            name: "radii",
            reason: "radii must be positive and strictly increasing".into(),
        });
    }
    Ok(())
}

/// Points `r·v̂` for every direction and radius, direction-major.
pub fn scan_points(directions: &[Vec<f64>], radii: &[f64]) -> Result<Vec<Vec<f64>>> {
    let mut points = Vec::with_capacity(directions.len() * radii.len());
    for dir in directions {
        let v = unit(dir)?;
        points.extend(radii.iter().map(|r| v.iter().map(|c| r * c).collect::<Vec<_>>()));
    }
    Ok(points)
}

/// Fit along `direction` using the rows of `result` at `r·v̂`.
pub fn fit_direction(
    result: &DeconvResult,
    sigma: &DiagonalCovariance,
    direction: &[f64],
    radii: &[f64],
) -> Result<AsymptoticFit> {
    validate_radii(radii)?;
    let d = sigma.dim();
    if direction.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: direction.len(),
        });
    }
    let v = unit(direction)?;
    let power = (d as f64 - 2.0) / 2.0;
    let mut h_values = Vec::with_capacity(radii.len());
    let mut prefactors = Vec::with_capacity(radii.len());
    let mut g_values = Vec::with_capacity(radii.len());
    let mut g_prefactors = Vec::with_capacity(radii.len());
    for &r in radii {
        let target: Vec<f64> = v.iter().map(|c| r * c).collect();
        let row = result
            .points
            .iter()
            .find(|p| {
                p.x.len() == d
                    && p.x.iter().zip(&target).all(|(a, b)| (a - b).abs() <= 1e-9 * r.max(1.0))
            })
            .ok_or_else(|| Error::InvalidArgument {
                name: "radii",
                reason: format!("no solved point at r = {r} along {v:?}"),
            })?;
        let scale = sigma.inverse_quadratic_form(&target).powf(power);
        h_values.push(row.h);
        prefactors.push(scale * row.h);
        g_values.push(row.g);
        g_prefactors.push(scale * row.g);
    }
    let predicted = result.g_hat0 * asymptotic_amplitude(sigma);
    let deviation = prefactors.last().copied().unwrap_or(f64::NAN) / predicted - 1.0;
    Ok(AsymptoticFit {
        direction: v,
        radii: radii.to_vec(),
        exponent: log_slope(radii, &h_values),
        g_exponent: log_slope(radii, &g_values),
        h_values,
        prefactors,
        g_prefactors,
        predicted,
        deviation,
    })
}

/// Tolerances applied by [`scan_report`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanTolerances {
    /// Spread of normalized prefactors across directions at the largest radius.
    pub direction_rel: f64,
    /// Deviation of each prefactor from the predicted amplitude.
    pub amplitude_rel: f64,
    /// Allowed difference between the fitted exponents of `G` and `H`.
    pub exponent_gap: f64,
}

impl Default for ScanTolerances {
    fn default() -> Self {
        Self {
            direction_rel: 0.02,
            amplitude_rel: 0.02,
            exponent_gap: 0.05,
        }
    }
}

/// Consolidated fits across directions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanReport {
    pub fits: Vec<AsymptoticFit>,
    /// Radii dropped because some point fell in the grid wrap-around zone.
    pub dropped_radii: Vec<f64>,
    /// `(max − min)/mean` of the prefactors at the largest radius.
    pub direction_spread: f64,
    pub max_amplitude_deviation: f64,
    pub max_exponent_gap: f64,
    pub tolerances: ScanTolerances,
    pub pass: bool,
    pub notes: Vec<String>,
}

impl ScanReport {
    /// Human-readable table, one line per direction.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<28} {:>14} {:>14} {:>10} {:>10} {:>10}",
            "direction", "prefactor", "predicted", "deviation", "exp(H)", "exp(G)"
        );
        for fit in &self.fits {
            let dir: Vec<String> = fit.direction.iter().map(|c| format!("{c:.3}")).collect();
            let _ = writeln!(
                out,
                "{:<28} {:>14.6e} {:>14.6e} {:>10.2e} {:>10.4} {:>10.4}",
                format!("({})", dir.join(",")),
                fit.last_prefactor(),
                fit.predicted,
                fit.deviation,
                fit.exponent,
                fit.g_exponent
            );
        }
        let _ = writeln!(
            out,
            "direction spread {:.3e} (tol {}), amplitude deviation {:.3e} (tol {}), G/H exponent gap {:.3e} (tol {}): {}",
            self.direction_spread,
            self.tolerances.direction_rel,
            self.max_amplitude_deviation,
            self.tolerances.amplitude_rel,
            self.max_exponent_gap,
            self.tolerances.exponent_gap,
            if self.pass { "PASS" } else { "FAIL" }
        );
        out
    }
}

/// Solve along every direction, fit, and compare with the asymptotic law.
///
/// Radii whose points the grid engine flags as aliased are dropped; an empty
/// direction list gives an empty, passing report.
pub fn scan_report(
    problem: &DeconvProblem,
    directions: &[Vec<f64>],
    radii: &[f64],
    tolerances: ScanTolerances,
) -> Result<ScanReport> {
    if directions.is_empty() {
        return Ok(ScanReport {
            fits: Vec::new(),
            dropped_radii: Vec::new(),
            direction_spread: 0.0,
            max_amplitude_deviation: 0.0,
            max_exponent_gap: 0.0,
            tolerances,
            pass: true,
            notes: Vec::new(),
        });
    }
    validate_radii(radii)?;
    let points = scan_points(directions, radii)?;
    let result = problem.solve(&points)?;
    let dropped_radii: Vec<f64> = radii
        .iter()
        .enumerate()
        .filter(|(i, _)| (0..directions.len()).any(|k| result.points[k * radii.len() + i].aliased))
        .map(|(_, r)| *r)
        .collect();
    let kept: Vec<f64> = radii.iter().copied().filter(|r| !dropped_radii.contains(r)).collect();
    let mut notes = result.notes.clone();
    if !dropped_radii.is_empty() {
        notes.push(format!("dropped radii in the wrap-around zone: {dropped_radii:?}"));
    }
    let fits = directions
        .iter()
        .map(|dir| fit_direction(&result, problem.sigma(), dir, &kept))
        .collect::<Result<Vec<_>>>()?;
    let last: Vec<f64> = fits.iter().map(|f| f.last_prefactor()).collect();
    let mean = last.iter().sum::<f64>() / last.len() as f64;
    let (lo, hi) = last
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let direction_spread = (hi - lo) / mean.abs();
    let max_amplitude_deviation = fits.iter().map(|f| f.deviation.abs()).fold(0.0, f64::max);
    let max_exponent_gap = fits
        .iter()
        .map(|f| (f.exponent - f.g_exponent).abs())
        .fold(0.0, f64::max);
    let pass = direction_spread <= tolerances.direction_rel
        && max_amplitude_deviation <= tolerances.amplitude_rel
        && max_exponent_gap <= tolerances.exponent_gap;
    Ok(ScanReport {
        fits,
        dropped_radii,
        direction_spread,
        max_amplitude_deviation,
        max_exponent_gap,
        tolerances,
        pass,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assumptions::InfraredGrid;
    use crate::deconv::SolverSettings;
    use crate::kernel::{GaussianMixtureKernel, Kernel};

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

    fn gaussian(entries: Vec<f64>) -> Kernel {
        GaussianMixtureKernel::gaussian(DiagonalCovariance::new(entries).unwrap()).into()
    }

    fn e(d: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        v
    }

    #[test]
    fn gaussian_walk_prefactor_matches_amplitude() {
        let d = gaussian(vec![1.0; 5]);
        let p = DeconvProblem::new(d.clone(), d, quick()).unwrap();
        let radii = [10.0, 20.0, 30.0, 40.0];
        let result = p.solve(&scan_points(&[e(5, 0)], &radii).unwrap()).unwrap();
        let fit = fit_direction(&result, p.sigma(), &e(5, 0), &radii).unwrap();
        assert!(fit.deviation.abs() < 0.01, "{fit:?}");
        assert!(fit.predicted > 0.0);
        assert!((fit.exponent + 3.0).abs() < 0.01, "{}", fit.exponent);
    }

    #[test]
    fn anisotropic_prefactors_agree_and_raw_ratio_is_eight() {
        let d = gaussian(vec![1.0, 1.0, 1.0, 1.0, 4.0]);
        let p = DeconvProblem::new(d.clone(), d, quick()).unwrap();
        let radii = [10.0, 20.0, 30.0, 40.0];
        let report = scan_report(&p, &[e(5, 0), e(5, 4)], &radii, ScanTolerances::default()).unwrap();
        assert!(report.pass, "{}", report.table());
        let ratio = report.fits[1].h_values[3] / report.fits[0].h_values[3];
        assert!((ratio / 8.0 - 1.0).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn isotropic_scan_is_direction_independent() {
        let d = gaussian(vec![1.0; 3]);
        let p = DeconvProblem::new(d.clone(), d, quick()).unwrap();
        let dirs = vec![
            e(3, 0),
            e(3, 1),
            e(3, 2),
            vec![1.0, 1.0, 0.0],
            vec![1.0, -1.0, 1.0],
            vec![0.3, 0.2, -0.9],
        ];
        let report = scan_report(&p, &dirs, &[5.0, 10.0, 15.0, 20.0], ScanTolerances::default()).unwrap();
        assert!(report.direction_spread < 1e-3, "{}", report.table());
    }

    #[test]
    fn empty_and_short_inputs() {
        let d = gaussian(vec![1.0; 3]);
        let p = DeconvProblem::new(d.clone(), d, quick()).unwrap();
        let empty = scan_report(&p, &[], &[1.0], ScanTolerances::default()).unwrap();
        assert!(empty.pass && empty.fits.is_empty());
        let result = p.solve(&[vec![1.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(
            fit_direction(&result, p.sigma(), &e(3, 0), &[1.0, 2.0, 3.0]),
            Err(Error::InvalidArgument { .. })
        ));
        assert!(matches!(
            fit_direction(&result, p.sigma(), &e(3, 0), &[1.0, 3.0, 2.0, 4.0]),
            Err(Error::InvalidArgument { .. })
        ));
    }
}
