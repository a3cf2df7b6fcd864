//! Dense embedding vectors shared by every stage of the pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VwsdError};

/// Tolerance used for the unit-norm contract.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// A fixed-dimension real vector, tagged with whether it has been
/// L2-normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    values: Vec<f64>,
    normalized: bool,
}

impl Embedding {
    /// Wraps raw values without normalizing them.
    pub fn from_raw(values: Vec<f64>) -> Self {
        Embedding {
            values,
            normalized: false,
        }
    }

    /// Wraps values and L2-normalizes them.
    pub fn unit(values: Vec<f64>, what: &'static str) -> Result<Self> {
        Embedding::from_raw(values).normalize(what)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Embedding) -> Result<f64> {
        self.check_dim(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn scaled(&self, factor: f64) -> Embedding {
        Embedding::from_raw(self.values.iter().map(|v| v * factor).collect())
    }

    /// Divides by the L2 norm. `what` names the operation in the error
    /// raised for a zero vector.
    pub fn normalize(self, what: &'static str) -> Result<Embedding> {
        let norm = self.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(VwsdError::ZeroVector(what));
        }
        Ok(Embedding {
            values: self.values.into_iter().map(|v| v / norm).collect(),
            normalized: true,
        })
    }

    pub fn check_dim(&self, other: &Embedding) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(VwsdError::DimensionMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        Ok(())
    }
}

/// Arithmetic mean of a nonempty list of equal-dimension embeddings. The
/// result is not normalized.
pub fn mean<'a, I>(embeddings: I) -> Result<Embedding>
where
    I: IntoIterator<Item = &'a Embedding>,
{
    let mut iter = embeddings.into_iter();
    let first = iter.next().ok_or(VwsdError::EmptyInput("mean of embeddings"))?;
    let mut acc = first.values.clone();
    let mut count = 1usize;
    for e in iter {
        first.check_dim(e)?;
        for (a, v) in acc.iter_mut().zip(&e.values) {
            *a += v;
        }
        count += 1;
    }
    let n = count as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(Embedding::from_raw(acc))
}

/// `wa * a + wb * b`, unnormalized.
pub fn weighted_sum(a: &Embedding, wa: f64, b: &Embedding, wb: f64) -> Result<Embedding> {
    a.check_dim(b)?;
    Ok(Embedding::from_raw(
        a.values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| wa * x + wb * y)
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_rejects_zero() {
        let err = Embedding::from_raw(vec![0.0; 4]).normalize("test").unwrap_err();
        assert!(matches!(err, VwsdError::ZeroVector("test")));
    }

    #[test]
    fn mean_of_empty_is_error() {
        assert!(mean(std::iter::empty()).is_err());
    }

    #[test]
    fn mean_checks_dimensions() {
        let a = Embedding::from_raw(vec![1.0, 0.0]);
        let b = Embedding::from_raw(vec![1.0]);
        assert!(matches!(
            mean([&a, &b]),
            Err(VwsdError::DimensionMismatch { expected: 2, actual: 1 })
        ));
    }

    #[test]
    fn unit_has_norm_one() {
        let e = Embedding::unit(vec![3.0, 4.0], "test").unwrap();
        assert!((e.norm() - 1.0).abs() < 1e-12);
        assert_eq!(e.values(), &[0.6, 0.8]);
        assert!(e.is_normalized());
    }
}
