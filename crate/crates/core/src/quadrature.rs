//! Quadrature rules: Gauss–Legendre, Gauss–Hermite, adaptive Gauss–Kronrod and
//! a product rule on the sphere for sign-symmetric integrands.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 0..n {
                let jf = j as f64;
                let p3 = p2;
                p2 = p1;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            dp = nf * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Gauss–Hermite rule for the standard normal measure: `Σ wᵢ f(zᵢ) ≈ E f(Z)`.
pub fn gauss_hermite_normal(n: usize) -> (Vec<f64>, Vec<f64>) {
    // Newton iteration on physicists' Hermite polynomials (orthonormal form).
    let pim4 = PI.powf(-0.25);
    let nf = n as f64;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = 0.0f64;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    let norm = PI.sqrt();
    let nodes = x.iter().map(|v| v * std::f64::consts::SQRT_2).collect();
    let weights = w.iter().map(|v| v / norm).collect();
    (nodes, weights)
}

const GK_NODES: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_2,
    0.0,
];
const GK_WEIGHTS: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_73,
    0.054_755_896_574_352,
    0.075_039_674_810_919_95,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_85,
    0.134_709_217_311_473_33,
    0.142_775_938_577_060_08,
    0.147_739_104_901_338_5,
    0.149_445_554_002_916_9,
];
const GAUSS_WEIGHTS: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_35,
    0.295_524_224_714_752_87,
];

/// Result of a one-dimensional integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    /// Sum of `|f|` integrated with the same nodes; measures cancellation.
    pub magnitude: f64,
    pub converged: bool,
}

fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = GK_WEIGHTS[10] * fc;
    let mut gauss = 0.0;
    let mut abs_sum = GK_WEIGHTS[10] * fc.abs();
    for i in 0..10 {
        let dx = h * GK_NODES[i];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        kronrod += GK_WEIGHTS[i] * (f1 + f2);
        abs_sum += GK_WEIGHTS[i] * (f1.abs() + f2.abs());
        if i % 2 == 1 {
            gauss += GAUSS_WEIGHTS[i / 2] * (f1 + f2);
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs(), abs_sum * h.abs())
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    magnitude: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Adaptive 21-point Gauss–Kronrod integration over consecutive breakpoints.
///
/// Panels with the largest error estimate are bisected until the total error is
/// below `max(abs_tol, rel_tol·|value|)` or `max_panels` is reached.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(
    f: F,
    breakpoints: &[f64],
    abs_tol: f64,
    rel_tol: f64,
    max_panels: usize,
) -> Integral {
    let mut heap = BinaryHeap::new();
    let (mut value, mut error) = (0.0, 0.0);
    for w in breakpoints.windows(2) {
        let (v, e, magnitude) = gk21(&f, w[0], w[1]);
        value += v;
        error += e;
        heap.push(Panel {
            a: w[0],
            b: w[1],
            value: v,
            error: e,
            magnitude,
        });
    }
    loop {
        let target = abs_tol.max(rel_tol * value.abs());
        if error <= target || heap.len() >= max_panels {
            // Deterministic summation order, independent of heap layout.
            let mut panels: Vec<&Panel> = heap.iter().collect();
            panels.sort_by(|p, q| p.a.total_cmp(&q.a));
            let value = panels.iter().map(|p| p.value).sum();
            let error = panels.iter().map(|p| p.error).sum();
            let magnitude = panels.iter().map(|p| p.magnitude).sum();
            return Integral {
                value,
                error,
                magnitude,
                converged: error <= target,
            };
        }
        let worst = heap.pop().expect("at least one panel");
        value -= worst.value;
        error -= worst.error;
        let mid = 0.5 * (worst.a + worst.b);
        for (a, b) in [(worst.a, mid), (mid, worst.b)] {
            let (v, e, magnitude) = gk21(&f, a, b);
            value += v;
            error += e;
            heap.push(Panel {
                a,
                b,
                value: v,
                error: e,
                magnitude,
            });
        }
    }
}

/// Integrate over `[a, b]` split into `panels` equal pieces before adapting.
pub fn integrate_panels<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    panels: usize,
    abs_tol: f64,
    rel_tol: f64,
) -> Integral {
    let panels = panels.max(1);
    let points: Vec<f64> = (0..=panels)
        .map(|i| a + (b - a) * i as f64 / panels as f64)
        .collect();
    integrate_adaptive(f, &points, abs_tol, rel_tol, 64 * panels + 2000)
}

/// Product rule over the unit sphere `S^{d−1}` for integrands that are even in
/// every coordinate separately. Nodes cover the positive orthant; weights are
/// scaled so that `Σ wᵢ F(ωᵢ) ≈ ∫_{S^{d−1}} F(ω) dω`.
#[derive(Debug, Clone)]
pub struct OrthantSphereRule {
    pub directions: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl OrthantSphereRule {
    pub fn new(dim: usize, nodes_per_angle: usize) -> Self {
        assert!(dim >= 2, "sphere rule needs d >= 2");
        let (x, w) = gauss_legendre(nodes_per_angle);
        let angles: Vec<(f64, f64)> = x
            .iter()
            .zip(&w)
            .map(|(xi, wi)| (PI / 4.0 * (xi + 1.0), PI / 4.0 * wi))
            .collect();
        // S^1 first, then lift S^{n−2} → S^{n−1} by prepending a polar angle.
        let mut directions: Vec<Vec<f64>> = angles
            .iter()
            .map(|&(phi, _)| vec![phi.cos(), phi.sin()])
            .collect();
        let mut weights: Vec<f64> = angles.iter().map(|&(_, w)| w).collect();
        for n in 3..=dim {
            let mut nd = Vec::with_capacity(directions.len() * angles.len());
            let mut nw = Vec::with_capacity(directions.len() * angles.len());
            for &(theta, wtheta) in &angles {
                let (s, c) = theta.sin_cos();
                let jac = s.powi(n as i32 - 2);
                for (dir, w) in directions.iter().zip(&weights) {
                    let mut v = Vec::with_capacity(n);
                    v.push(c);
                    v.extend(dir.iter().map(|u| u * s));
                    nd.push(v);
                    nw.push(w * wtheta * jac);
                }
            }
            directions = nd;
            weights = nw;
        }
        let scale = (1u64 << dim) as f64;
        weights.iter_mut().for_each(|w| *w *= scale);
        Self {
            directions,
            weights,
        }
    }

    pub fn integrate<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        self.directions
            .iter()
            .zip(&self.weights)
            .map(|(d, w)| w * f(d))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(10);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(18)).sum();
        assert!((s - 2.0 / 19.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn hermite_moments_of_standard_normal() {
        let (z, w) = gauss_hermite_normal(12);
        let m = |p: i32| -> f64 { z.iter().zip(&w).map(|(z, w)| w * z.powi(p)).sum() };
        assert!((m(0) - 1.0).abs() < 1e-13);
        assert!(m(1).abs() < 1e-13);
        assert!((m(2) - 1.0).abs() < 1e-13);
        assert!((m(4) - 3.0).abs() < 1e-12);
        assert!((m(8) - 105.0).abs() < 1e-9);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let r = integrate_adaptive(|x: f64| 1.0 / x.sqrt(), &[0.0, 1.0], 1e-10, 1e-12, 2000);
        assert!((r.value - 2.0).abs() < 1e-8, "{r:?}");
    }

    #[test]
    fn adaptive_oscillatory() {
        let r = integrate_panels(|x: f64| (50.0 * x).cos(), 0.0, 3.0, 20, 1e-14, 1e-13);
        assert!((r.value - (150.0f64).sin() / 50.0).abs() < 1e-13);
        assert!(r.converged);
    }

    #[test]
    fn sphere_rule_area_and_second_moment() {
        for d in 2..=6 {
            let rule = OrthantSphereRule::new(d, 10);
            let area = rule.integrate(|_| 1.0);
            assert!((area - crate::special::sphere_area(d)).abs() < 1e-12, "d={d}");
            // ∫ ω₁² dω = area / d
            let m2 = rule.integrate(|w| w[d - 1] * w[d - 1]);
            assert!((m2 - area / d as f64).abs() < 1e-12, "d={d}");
        }
    }
}
