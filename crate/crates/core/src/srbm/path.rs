//! Brownian paths on `[0, N]`, the pair interaction and the Hamiltonian.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{Interaction, SrbmConfig};
use crate::{Error, Result};

/// One discretized path: for each leg, the positions at the `m` time-midpoints
/// `s = (k + ½)/m` and the leg's endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    dim: usize,
    substeps: usize,
    legs: usize,
    /// `legs × substeps × dim`.
    midpoints: Vec<f64>,
    /// `legs × dim`: `B(1), …, B(N)`.
    endpoints: Vec<f64>,
}

impl Path {
    pub fn from_parts(
        dim: usize,
        substeps: usize,
        midpoints: Vec<f64>,
        endpoints: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 || substeps == 0 || endpoints.len() % dim != 0 {
            return Err(Error::InvalidArgument {
                name: "path",
                reason: "inconsistent path dimensions".into(),
            });
        }
        let legs = endpoints.len() / dim;
        if midpoints.len() != legs * substeps * dim {
            return Err(Error::InvalidArgument {
                name: "path",
                reason: format!(
                    "expected {} midpoint coordinates, got {}",
                    legs * substeps * dim,
                    midpoints.len()
                ),
            });
        }
        Ok(Self {
            dim,
            substeps,
            legs,
            midpoints,
            endpoints,
        })
    }

    /// Sample a standard Brownian path with `legs` unit-time legs, resolved at
    /// half-substep spacing so that midpoints are exact samples.
    pub fn sample<R: Rng>(rng: &mut R, dim: usize, legs: usize, substeps: usize) -> Self {
        let half = (0.5 / substeps as f64).sqrt();
        let mut position = vec![0.0; dim];
        let mut midpoints = Vec::with_capacity(legs * substeps * dim);
        let mut endpoints = Vec::with_capacity(legs * dim);
        let step = |position: &mut [f64], rng: &mut R| {
            for c in position.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *c += half * z;
            }
        };
        for _ in 0..legs {
            for _ in 0..substeps {
                step(&mut position, rng);
                midpoints.extend_from_slice(&position);
                step(&mut position, rng);
            }
            endpoints.extend_from_slice(&position);
        }
        Self {
            dim,
            substeps,
            legs,
            midpoints,
            endpoints,
        }
    }

    pub fn legs(&self) -> usize {
        self.legs
    }

    /// `B(n)` for `1 ≤ n ≤ N`.
    pub fn endpoint(&self, n: usize) -> &[f64] {
        &self.endpoints[(n - 1) * self.dim..n * self.dim]
    }

    fn leg(&self, i: usize) -> &[f64] {
        let len = self.substeps * self.dim;
        &self.midpoints[i * len..(i + 1) * len]
    }

    /// Midpoint-rule `V(Bᵢ, Bⱼ) = ∫₀¹ v(|Bᵢ(s) − Bⱼ(s)|) ds` (legs 0-based).
    pub fn pair_interaction(&self, i: usize, j: usize, v: &Interaction) -> f64 {
        let (a, b) = (self.leg(i), self.leg(j));
        a.chunks_exact(self.dim)
            .zip(b.chunks_exact(self.dim))
            .map(|(p, q)| {
                let r2: f64 = p.iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum();
                v.value(r2.sqrt())
            })
            .sum::<f64>()
            / self.substeps as f64
    }

    /// `H_n` for every prefix `n = 1..=N`: `H_n = H_{n−1} + Σ_{i<n} V(Bᵢ, B_n)`.
    pub fn prefix_hamiltonians(&self, v: &Interaction) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.legs);
        let mut h = 0.0;
        for n in 0..self.legs {
            h += (0..n).map(|i| self.pair_interaction(i, n, v)).sum::<f64>();
            out.push(h);
        }
        out
    }
}

/// `H_N(B) = Σ_{1≤i<j≤N} V(Bᵢ, Bⱼ)`.
pub fn hamiltonian(path: &Path, v: &Interaction) -> f64 {
    path.prefix_hamiltonians(v).last().copied().unwrap_or(0.0)
}

/// Sampled paths reduced to what the estimators need: endpoints and prefix
/// Hamiltonians for every `n ≤ N`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    dim: usize,
    legs: usize,
    alpha: f64,
    /// `paths × legs × dim`.
    endpoints: Vec<f64>,
    /// `paths × legs`.
    hamiltonians: Vec<f64>,
}

impl PathEnsemble {
    /// Sample `config.paths` paths in batches; batch `b` uses stream `b` of a
    /// ChaCha8 generator keyed by the master seed, so results do not depend
    /// on the number of worker threads.
    pub fn sample(config: &SrbmConfig) -> Result<Self> {
        config.validate()?;
        let (d, legs, m) = (config.dim, config.legs, config.substeps);
        let interaction = config.interaction();
        let batch = config.batch_size.max(1);
        let batches = config.paths.div_ceil(batch);
        let parts: Vec<(Vec<f64>, Vec<f64>)> = (0..batches)
            .into_par_iter()
            .map(|b| {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(b as u64);
                let count = batch.min(config.paths - b * batch);
                let mut ends = Vec::with_capacity(count * legs * d);
                let mut hams = Vec::with_capacity(count * legs);
                for _ in 0..count {
                    let path = Path::sample(&mut rng, d, legs, m);
                    ends.extend_from_slice(&path.endpoints);
                    if config.alpha == 0.0 {
                        hams.extend(std::iter::repeat_n(0.0, legs));
                    } else {
                        hams.extend(path.prefix_hamiltonians(&interaction));
                    }
                }
                (ends, hams)
            })
            .collect();
        let mut endpoints = Vec::with_capacity(config.paths * legs * d);
        let mut hamiltonians = Vec::with_capacity(config.paths * legs);
        for (e, h) in parts {
            endpoints.extend(e);
            hamiltonians.extend(h);
        }
        Ok(Self {
            dim: d,
            legs,
            alpha: config.alpha,
            endpoints,
            hamiltonians,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn legs(&self) -> usize {
        self.legs
    }

    pub fn paths(&self) -> usize {
        self.hamiltonians.len() / self.legs
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `H_n` of path `p`.
    pub fn hamiltonian(&self, p: usize, n: usize) -> f64 {
        self.hamiltonians[p * self.legs + n - 1]
    }

    /// Weight `e^{−αH_n}` of path `p`.
    pub fn weight(&self, p: usize, n: usize) -> f64 {
        (-self.alpha * self.hamiltonian(p, n)).exp()
    }

    pub fn weights(&self, n: usize) -> Vec<f64> {
        (0..self.paths()).map(|p| self.weight(p, n)).collect()
    }

    /// `B(n)` of path `p`.
    pub fn endpoint(&self, p: usize, n: usize) -> &[f64] {
        let start = (p * self.legs + n - 1) * self.dim;
        &self.endpoints[start..start + self.dim]
    }

    /// Mean weight `‖Γ_{α,n}‖₁` and its standard error.
    pub fn mean_weight(&self, n: usize) -> (f64, f64) {
        mean_and_stderr(&self.weights(n))
    }

    /// Kish effective sample size `(Σw)²/Σw²`.
    pub fn effective_sample_size(&self, n: usize) -> f64 {
        let w = self.weights(n);
        let s: f64 = w.iter().sum();
        let s2: f64 = w.iter().map(|v| v * v).sum();
        if s2 == 0.0 {
            0.0
        } else {
            s * s / s2
        }
    }
}

/// Sample mean and standard error of the mean.
pub(crate) fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
