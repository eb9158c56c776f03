//! Numerical solution of the critical convolution equation `(δ − J) ∗ G = g` on ℝᵈ.
//!
//! The solution is split as `H = G − g = ĝ(0)·C + f`, where `C` is the two-point
//! function of a Gaussian random walk whose covariance matches the second moments
//! of `J`, and `f` is a remainder whose Fourier transform is far less singular at
//! the origin than `Ĥ`. `C` is summed as an exact series, `f` is obtained by a
//! discrete or radial inverse Fourier transform.
//!
//! Module map:
//! - [`kernel`]: even kernels (diagonal Gaussian mixtures, radial tables) with
//!   evaluation, Fourier transform, convolution and moments.
//! - [`assumptions`]: moment, criticality and infrared checks on `(J, g)`.
//! - [`gausswalk`]: the Gaussian step density, the walk series `C` and its
//!   asymptotic form.
//! - [`deconv`]: the decomposition solver plus independent oracles.
//! - [`asymptotics`]: direction scans against the predicted amplitude.
//! - [`srbm`]: Monte Carlo for the self-repellent Brownian motion.

pub mod assumptions;
pub mod asymptotics;
pub mod deconv;
mod error;
pub mod gausswalk;
pub mod kernel;
pub mod quadrature;
pub mod special;
pub mod srbm;

pub use error::{Error, Result};
pub use kernel::{DiagonalCovariance, GaussianMixtureKernel, Kernel, RadialTabulatedKernel};
