use std::ops::{Deref, Index};

use crate::{CoreError, Result};

/// A fixed-dimension dense real vector.
///
/// Used for ID embeddings, window embeddings, pooled embeddings and every
/// tower output. Construction through [`EmbeddingVector::new`] rejects
/// non-finite entries.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(CoreError::NonFiniteValue { index });
        }
        Ok(Self(values))
    }

    /// Wraps values without the finiteness check. Callers guarantee finiteness.
    pub fn from_vec_unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &Self) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Deref for EmbeddingVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for EmbeddingVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Checks that a corpus is non-empty, single-dimensional and finite, and
/// returns the shared dimension.
pub fn validate_corpus<V: AsRef<[f64]>>(corpus: &[V]) -> Result<usize> {
    let first = corpus.first().ok_or(CoreError::EmptyCorpus)?;
    let dim = first.as_ref().len();
    for (index, row) in corpus.iter().enumerate() {
        let row = row.as_ref();
        if row.len() != dim {
            return Err(CoreError::DimensionMismatch {
                index,
                expected: dim,
                found: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFiniteValue { index });
        }
    }
    Ok(dim)
}

impl AsRef<[f64]> for EmbeddingVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}
