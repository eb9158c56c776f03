use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Positive-definite diagonal covariance matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DiagonalCovariance {
    entries: Vec<f64>,
}

impl DiagonalCovariance {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidCovariance("no entries".into()));
        }
        if let Some((i, v)) = entries
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::InvalidCovariance(format!(
                "entry {i} is {v}, must be finite and > 0"
            )));
        }
        Ok(Self { entries })
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, s: f64) -> Self {
        assert!(s > 0.0 && s.is_finite(), "scale must be positive");
        Self {
            entries: vec![s; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn determinant(&self) -> f64 {
        self.entries.iter().product()
    }

    /// `x · Σ⁻¹ x`
    pub fn inverse_quadratic_form(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.entries).map(|(x, s)| x * x / s).sum()
    }

    /// `k · Σ k`
    pub fn quadratic_form(&self, k: &[f64]) -> f64 {
        k.iter().zip(&self.entries).map(|(k, s)| s * k * k).sum()
    }

    pub fn min_entry(&self) -> f64 {
        self.entries.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_entry(&self) -> f64 {
        self.entries.iter().copied().fold(0.0, f64::max)
    }

    pub fn sum(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        Self {
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        assert!(factor > 0.0 && factor.is_finite(), "scale must be positive");
        Self {
            entries: self.entries.iter().map(|s| s * factor).collect(),
        }
    }

    /// Entrywise equality within `rel_tol` relative.
    pub fn approx_eq(&self, other: &Self, rel_tol: f64) -> bool {
        self.dim() == other.dim()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| (a - b).abs() <= rel_tol * a.abs().max(b.abs()))
    }

    /// Returns `c` with `self ≈ c · other` when the two matrices are proportional.
    pub fn ratio_to(&self, other: &Self, rel_tol: f64) -> Option<f64> {
        if self.dim() != other.dim() {
            return None;
        }
        let c = self.entries[0] / other.entries[0];
        self.approx_eq(&other.scaled(c), rel_tol).then_some(c)
    }

    pub fn is_isotropic(&self, rel_tol: f64) -> bool {
        let first = self.entries[0];
        self.entries
            .iter()
            .all(|s| (s - first).abs() <= rel_tol * first)
    }
}

impl TryFrom<Vec<f64>> for DiagonalCovariance {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<DiagonalCovariance> for Vec<f64> {
    fn from(c: DiagonalCovariance) -> Self {
        c.entries
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_nonpositive_entries() {
        assert!(DiagonalCovariance::new(vec![1.0, 0.0, 2.0]).is_err());
        assert!(DiagonalCovariance::new(vec![1.0, -1.0]).is_err());
        assert!(DiagonalCovariance::new(vec![f64::NAN]).is_err());
        assert!(DiagonalCovariance::new(vec![]).is_err());
    }

    #[test]
    fn determinant_and_forms() {
        let s = DiagonalCovariance::new(vec![1.0, 2.0, 4.0]).unwrap();
        assert_eq!(s.determinant(), 8.0);
        assert_eq!(s.inverse_quadratic_form(&[1.0, 2.0, 4.0]), 1.0 + 2.0 + 4.0);
        assert_eq!(s.quadratic_form(&[1.0, 1.0, 1.0]), 7.0);
    }

    #[test]
    fn proportionality() {
        let a = DiagonalCovariance::new(vec![1.0, 1.0, 4.0]).unwrap();
        let b = a.scaled(2.5);
        assert!((b.ratio_to(&a, 1e-12).unwrap() - 2.5).abs() < 1e-15);
        let c = DiagonalCovariance::new(vec![1.0, 2.0, 4.0]).unwrap();
        assert!(c.ratio_to(&a, 1e-12).is_none());
    }
}
