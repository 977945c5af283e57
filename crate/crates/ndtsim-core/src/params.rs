//! Flat parameter vectors shared by predictors, attacks, and aggregators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A model as a flat vector of f64 parameters.
///
/// All twin models in one experiment share a dimension, and every
/// aggregator or attack rejects inputs whose entries are NaN or
/// infinite before using them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        ParamVector(values)
    }

    pub fn zeros(dim: usize) -> Self {
        ParamVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn check_finite(&self, context: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite { context })
        }
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim() == other.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            })
        }
    }

    /// Element-wise a*self + b*other.
    pub fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        self.check_dim(other)?;
        Ok(ParamVector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        ))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.lin_comb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.lin_comb(1.0, other, -1.0)
    }

    pub fn scale(&self, a: f64) -> Self {
        ParamVector(self.0.iter().map(|x| a * x).collect())
    }

    pub fn l2_norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn l2_dist(&self, other: &Self) -> Result<f64> {
        self.check_dim(other)?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt())
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check_dim(other)?;
        Ok(self.0.iter().zip(&other.0).map(|(x, y)| x * y).sum())
    }

    /// Cosine similarity; zero when either vector has zero norm.
    pub fn cosine(&self, other: &Self) -> Result<f64> {
        let dot = self.dot(other)?;
        let na = self.l2_norm();
        let nb = other.l2_norm();
        if na == 0.0 || nb == 0.0 {
            Ok(0.0)
        } else {
            Ok(dot / (na * nb))
        }
    }
}

impl std::ops::Index<usize> for ParamVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Checks a set of models for emptiness, equal dimensions, and finite entries.
pub fn check_models(models: &[ParamVector], context: &'static str) -> Result<usize> {
    let first = models.first().ok_or(Error::NotEnoughModels { got: 0, min: 1 })?;
    let dim = first.dim();
    for m in models {
        if m.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: m.dim(),
            });
        }
        m.check_finite(context)?;
    }
    Ok(dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lin_comb_combines_elementwise() {
        let a = ParamVector::new(vec![1.0, 2.0]);
        let b = ParamVector::new(vec![3.0, -1.0]);
        let c = a.lin_comb(2.0, &b, -1.0).unwrap();
        assert_eq!(c.values(), &[-1.0, 5.0]);
    }

    #[test]
    fn mismatched_dims_rejected() {
        let a = ParamVector::zeros(2);
        let b = ParamVector::zeros(3);
        assert!(matches!(
            a.add(&b),
            Err(Error::DimensionMismatch { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn norm_and_distance() {
        let a = ParamVector::new(vec![3.0, 4.0]);
        let b = ParamVector::zeros(2);
        assert_eq!(a.l2_norm(), 5.0);
        assert_eq!(a.l2_dist(&b).unwrap(), 5.0);
    }

    #[test]
    fn cosine_handles_zero_vectors() {
        let a = ParamVector::zeros(2);
        let b = ParamVector::new(vec![1.0, 0.0]);
        assert_eq!(a.cosine(&b).unwrap(), 0.0);
        assert_eq!(b.cosine(&b).unwrap(), 1.0);
    }

    #[test]
    fn check_models_flags_non_finite() {
        let ms = vec![ParamVector::new(vec![1.0, f64::NAN])];
        assert!(matches!(
            check_models(&ms, "test"),
            Err(Error::NonFinite { .. })
        ));
    }
}
