//! Admissibility checks for a pair `(J, g)`: evenness, the moment conditions,
//! criticality `Ĵ(0) = 1` and the infrared bound
//! `Ĵ(0) − Ĵ(k) ≥ K_IR (|k|² ∧ 1)`.
//!
//! Failures are values in the report, never errors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::kernel::Kernel;
use crate::{Error, Result};

/// Tolerance on `|Ĵ(0) − 1|` for kernels supplied as critical.
pub const USER_CRITICALITY_TOL: f64 = 1e-6;
/// Tolerance on `|Ĵ(0) − 1|` after [`criticalize`].
pub const NORMALIZED_CRITICALITY_TOL: f64 = 1e-10;
/// Values of `ε` tried for the `|x|^{2+ε}` moment, largest first.
pub const EPSILON_CANDIDATES: [f64; 4] = [1.0, 0.5, 0.25, 0.1];

/// Sampling grid for the infrared constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InfraredGrid {
    pub radii: usize,
    pub k_min: f64,
    pub k_max: f64,
    pub random_directions: usize,
}

impl Default for InfraredGrid {
    fn default() -> Self {
        Self {
            radii: 512,
            k_min: 1e-4,
            k_max: 40.0,
            random_directions: 64,
        }
    }
}

/// Tolerances and grids used by [`check_assumptions`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    pub criticality_tolerance: f64,
    pub epsilons: Vec<f64>,
    pub infrared: InfraredGrid,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            criticality_tolerance: USER_CRITICALITY_TOL,
            epsilons: EPSILON_CANDIDATES.to_vec(),
            infrared: InfraredGrid::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentValue {
    pub order: f64,
    pub p: f64,
    pub value: f64,
}

impl MomentValue {
    fn of(h: &Kernel, order: f64, p: f64) -> Self {
        Self {
            order,
            p,
            value: h.moment(order, p),
        }
    }

    pub fn finite(&self) -> bool {
        self.value.is_finite()
    }
}

/// `h, |x|²h ∈ L¹ ∩ L²`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaseMoments {
    pub values: Vec<MomentValue>,
    pub pass: bool,
}

/// `|x|^{2+ε} h ∈ L¹` for the largest passing candidate `ε`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonMoment {
    pub epsilon: Option<f64>,
    pub tried: Vec<MomentValue>,
    pub pass: bool,
}

/// `|x|^{d−2} h ∈ Lᵖ ∩ L²` for some `1 ≤ p < d/4` (only required when `d > 4`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HighMoment {
    pub applicable: bool,
    pub order: f64,
    pub p: Option<f64>,
    pub p_star: f64,
    pub lp_value: f64,
    pub l2_value: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Criticality {
    pub fourier_at_zero: f64,
    pub deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfraredEstimate {
    /// Infimum of `(Ĵ(0) − Ĵ(k)) / (|k|² ∧ 1)` over the grid and the tail bound.
    pub constant: f64,
    /// `|k|` at which the grid infimum was attained.
    pub argmin_radius: f64,
    /// Lower bound on `Ĵ(0) − Ĵ(k)` for `|k| > k_max` (mixtures only).
    pub tail_bound: Option<f64>,
    /// The infimum sits at the first or last grid radius: the grid may be too coarse
    /// or too short.
    pub boundary_hit: bool,
}

/// Verdict on the admissibility conditions for one kernel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub dimension: usize,
    pub even: bool,
    pub base_moments: BaseMoments,
    pub epsilon_moment: EpsilonMoment,
    pub high_moment: HighMoment,
    /// Present for `J` only.
    pub criticality: Option<Criticality>,
    /// Present for `J` only.
    pub infrared: Option<InfraredEstimate>,
}

impl AssumptionReport {
    pub fn pass(&self) -> bool {
        self.even
            && self.base_moments.pass
            && self.epsilon_moment.pass
            && self.high_moment.pass
            && self.criticality.as_ref().is_none_or(|c| c.pass)
            && self.infrared.as_ref().is_none_or(|i| i.constant > 0.0)
    }

    /// Human-readable summary, one check per line.
    pub fn summary(&self, name: &str) -> String {
        let verdict = |b: bool| if b { "pass" } else { "FAIL" };
        let mut lines = vec![format!("[{name}] overall: {}", verdict(self.pass()))];
        lines.push(format!("  evenness: {}", verdict(self.even)));
        let base: Vec<String> = self
            .base_moments
            .values
            .iter()
            .map(|m| format!("|x|^{}·h in L^{}: {:.6e}", m.order, m.p, m.value))
            .collect();
        lines.push(format!(
            "  L1/L2 moments: {} ({})",
            verdict(self.base_moments.pass),
            base.join(", ")
        ));
        lines.push(match self.epsilon_moment.epsilon {
            Some(e) => format!("  |x|^(2+eps) moment: pass with eps = {e}"),
            None => "  |x|^(2+eps) moment: FAIL for every candidate eps".to_string(),
        });
        let hm = &self.high_moment;
        lines.push(if hm.applicable {
            format!(
                "  |x|^(d-2) moment: {} (p = {}, p* = {:.4}, Lp = {:.6e}, L2 = {:.6e})",
                verdict(hm.pass),
                hm.p.map_or("none".to_string(), |p| format!("{p:.4}")),
                hm.p_star,
                hm.lp_value,
                hm.l2_value
            )
        } else {
            "  |x|^(d-2) moment: not required for d <= 4".to_string()
        });
        if let Some(c) = &self.criticality {
            lines.push(format!(
                "  criticality: {} (|J^(0) - 1| = {:.3e}, tolerance {:.1e})",
                verdict(c.pass),
                c.deviation,
                c.tolerance
            ));
        }
        if let Some(ir) = &self.infrared {
            lines.push(format!(
                "  infrared: {} (K_IR = {:.6e} at |k| = {:.4e}{})",
                verdict(ir.constant > 0.0),
                ir.constant,
                ir.argmin_radius,
                if ir.boundary_hit {
                    "; infimum at grid boundary"
                } else {
                    ""
                }
            ));
        }
        lines.join("\n")
    }
}

fn base_moments(h: &Kernel) -> BaseMoments {
    let values: Vec<MomentValue> = [(0.0, 1.0), (0.0, 2.0), (2.0, 1.0), (2.0, 2.0)]
        .iter()
        .map(|&(a, p)| MomentValue::of(h, a, p))
        .collect();
    let pass = values.iter().all(MomentValue::finite);
    BaseMoments { values, pass }
}

fn epsilon_moment(h: &Kernel, epsilons: &[f64]) -> EpsilonMoment {
    let mut candidates = epsilons.to_vec();
    candidates.sort_by(|a, b| b.total_cmp(a));
    let mut tried = Vec::new();
    for eps in candidates {
        let m = MomentValue::of(h, 2.0 + eps, 1.0);
        tried.push(m);
        if m.finite() {
            return EpsilonMoment {
                epsilon: Some(eps),
                tried,
                pass: true,
            };
        }
    }
    EpsilonMoment {
        epsilon: None,
        tried,
        pass: false,
    }
}

fn high_moment(h: &Kernel) -> HighMoment {
    let d = h.dim();
    let order = d as f64 - 2.0;
    let p_star = d as f64 / 4.0;
    if d <= 4 {
        return HighMoment {
            applicable: false,
            order,
            p: None,
            p_star,
            lp_value: f64::NAN,
            l2_value: f64::NAN,
            pass: true,
        };
    }
    let l2_value = h.moment(order, 2.0);
    let mut lp_value = f64::INFINITY;
    let mut p_used = None;
    for step in 0..4 {
        let p = 1.0 + (p_star - 1.0) * step as f64 / 4.0;
        let v = h.moment(order, p);
        if v.is_finite() {
            lp_value = v;
            p_used = Some(p);
            break;
        }
        lp_value = v;
    }
    HighMoment {
        applicable: true,
        order,
        p: p_used,
        p_star,
        lp_value,
        l2_value,
        pass: p_used.is_some() && l2_value.is_finite(),
    }
}

/// Moment and evenness checks shared by `J` and `g`.
pub fn check_kernel(h: &Kernel, config: &CheckConfig) -> AssumptionReport {
    AssumptionReport {
        dimension: h.dim(),
        even: h.is_even(),
        base_moments: base_moments(h),
        epsilon_moment: epsilon_moment(h, &config.epsilons),
        high_moment: high_moment(h),
        criticality: None,
        infrared: None,
    }
}

/// `|Ĵ(0) − 1|` against a tolerance.
pub fn check_criticality(j: &Kernel, tolerance: f64) -> Result<Criticality> {
    let f0 = j.mass()?;
    let deviation = (f0 - 1.0).abs();
    Ok(Criticality {
        fourier_at_zero: f0,
        deviation,
        tolerance,
        pass: deviation <= tolerance,
    })
}

/// Full report for `(J, g)`. Fourier failures of tabulated kernels surface as
/// failed criticality / infrared entries.
pub fn check_assumptions(
    j: &Kernel,
    g: &Kernel,
    config: &CheckConfig,
) -> Result<(AssumptionReport, AssumptionReport)> {
    if j.dim() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: j.dim(),
            got: g.dim(),
        });
    }
    if j.dim() < 3 {
        return Err(Error::DimensionTooSmall(j.dim()));
    }
    let mut rj = check_kernel(j, config);
    rj.criticality = Some(
        check_criticality(j, config.criticality_tolerance).unwrap_or(Criticality {
            fourier_at_zero: f64::NAN,
            deviation: f64::INFINITY,
            tolerance: config.criticality_tolerance,
            pass: false,
        }),
    );
    rj.infrared = Some(estimate_infrared(j, &config.infrared).unwrap_or(InfraredEstimate {
        constant: f64::NEG_INFINITY,
        argmin_radius: f64::NAN,
        tail_bound: None,
        boundary_hit: false,
    }));
    let rg = check_kernel(g, config);
    Ok((rj, rg))
}

/// Deterministic quasi-random unit vectors: Halton points pushed through the
/// normal quantile and normalized.
fn quasi_random_directions(dim: usize, count: usize) -> Vec<Vec<f64>> {
    const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    let normal = Normal::standard();
    let radical_inverse = |mut i: u64, base: u64| -> f64 {
        let (mut f, mut r) = (1.0, 0.0);
        while i > 0 {
            f /= base as f64;
            r += f * (i % base) as f64;
            i /= base;
        }
        r
    };
    (1..=count as u64)
        .map(|i| {
            let v: Vec<f64> = (0..dim)
                .map(|c| normal.inverse_cdf(radical_inverse(i, PRIMES[c % PRIMES.len()])))
                .collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / n).collect()
        })
        .collect()
}

/// Directions scanned by [`estimate_infrared`]: coordinate axes (both signs)
/// plus quasi-random directions; radial kernels need only one.
fn infrared_directions(j: &Kernel, count: usize) -> Vec<Vec<f64>> {
    let d = j.dim();
    let axis = |i: usize, s: f64| -> Vec<f64> {
        let mut e = vec![0.0; d];
        e[i] = s;
        e
    };
    if let Kernel::Tabulated(_) = j {
        return vec![axis(0, 1.0)];
    }
    let mut dirs: Vec<Vec<f64>> = (0..d)
        .flat_map(|i| [axis(i, 1.0), axis(i, -1.0)])
        .collect();
    dirs.extend(quasi_random_directions(d, count));
    dirs
}

/// Estimate `K_IR = inf_k (Ĵ(0) − Ĵ(k)) / (|k|² ∧ 1)`.
pub fn estimate_infrared(j: &Kernel, grid: &InfraredGrid) -> Result<InfraredEstimate> {
    if grid.radii < 2 || !(grid.k_min > 0.0 && grid.k_max > grid.k_min) {
        return Err(Error::InvalidArgument {
            name: "infrared grid",
            reason: "need at least two radii and 0 < k_min < k_max".into(),
        });
    }
    let ratio = (grid.k_max / grid.k_min).ln();
    let mut radii: Vec<f64> = (0..grid.radii)
        .map(|i| grid.k_min * (ratio * i as f64 / (grid.radii - 1) as f64).exp())
        .collect();
    // |k| = 1 is where |k|² ∧ 1 has its kink; sample it exactly.
    if grid.k_min < 1.0 && grid.k_max > 1.0 {
        radii.push(1.0);
        radii.sort_by(f64::total_cmp);
    }
    let dirs = infrared_directions(j, grid.random_directions);
    let per_direction: Vec<Result<(f64, usize)>> = dirs
        .par_iter()
        .map(|dir| {
            let mut best = (f64::INFINITY, 0usize);
            let mut k = vec![0.0; dir.len()];
            for (idx, &r) in radii.iter().enumerate() {
                for (ki, ui) in k.iter_mut().zip(dir) {
                    *ki = r * ui;
                }
                let deficit = j.fourier_deficit(&k)?;
                let value = deficit / (r * r).min(1.0);
                if value < best.0 {
                    best = (value, idx);
                }
            }
            Ok(best)
        })
        .collect();
    let mut best = (f64::INFINITY, 0usize);
    for r in per_direction {
        let r = r?;
        if r.0 < best.0 {
            best = r;
        }
    }
    let tail_bound = j.as_mixture().map(|m| {
        let positive: f64 = m
            .effective()
            .filter(|(w, _)| *w > 0.0)
            .map(|(w, s)| w * (-0.5 * s.min_entry() * grid.k_max * grid.k_max).exp())
            .sum();
        m.mass() - positive
    });
    let constant = match tail_bound {
        Some(t) => best.0.min(t),
        None => best.0,
    };
    Ok(InfraredEstimate {
        constant,
        argmin_radius: radii[best.1],
        tail_bound,
        boundary_hit: best.1 == 0 || best.1 == radii.len() - 1,
    })
}

/// `J₀ / Ĵ₀(0)`.
pub fn criticalize(j0: &Kernel) -> Result<Kernel> {
    let mass = j0.mass()?;
    if !(mass > 0.0) {
        return Err(Error::NonPositiveMass(mass));
    }
    if mass == 1.0 {
        return Ok(j0.clone());
    }
    Ok(j0.scaled(1.0 / mass))
}

/// Hölder interpolation between the `L¹` bound on `|x|²h` and the
/// `L^{p_a}` bound on `|x|^a h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentInterpolation {
    pub p_b: f64,
    /// `d / (d − b + 2)`.
    pub p_b_star: f64,
    /// `d / (d − a + 2)`.
    pub p_a_star: f64,
    /// `p_b < p_b*`.
    pub strict: bool,
}

/// `1/p_b = (a−b)/(a−2) + (b−2)/((a−2) p_a)`.
pub fn interpolate_moment_exponent(a: f64, b: f64, p_a: f64, d: usize) -> Result<MomentInterpolation> {
    let df = d as f64;
    let bad = |reason: String| Error::InvalidArgument {
        name: "moment interpolation",
        reason,
    };
    if d < 3 {
        return Err(Error::DimensionTooSmall(d));
    }
    if !(2.0 <= b && b <= a && a <= df + 2.0) {
        return Err(bad(format!("need 2 <= b <= a <= d+2, got a={a}, b={b}, d={d}")));
    }
    if !(p_a >= 1.0 && p_a.is_finite()) {
        return Err(bad(format!("need finite p_a >= 1, got {p_a}")));
    }
    let p_b = if a == b {
        p_a
    } else {
        1.0 / ((a - b) / (a - 2.0) + (b - 2.0) / ((a - 2.0) * p_a))
    };
    let p_b_star = df / (df - b + 2.0);
    Ok(MomentInterpolation {
        p_b,
        p_b_star,
        p_a_star: df / (df - a + 2.0),
        strict: p_b < p_b_star,
    })
}
