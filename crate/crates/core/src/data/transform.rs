use nalgebra::{DMatrix, DVector};

use super::IVectorCorpus;
use crate::{Error, Result};

/// Affine map `x -> transform * (x - mean)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningTransform {
    pub mean: DVector<f64>,
    pub transform: DMatrix<f64>,
}

/// Eigenvalues below this fraction of the largest one count as zero.
const RANK_TOLERANCE: f64 = 1e-12;

impl WhiteningTransform {
    /// Symmetric (ZCA) whitening: the transform is the inverse principal
    /// square root of the maximum-likelihood covariance (divisor n).
    pub fn fit(corpus: &IVectorCorpus) -> Result<Self> {
        let n = corpus.len();
        if n < 2 {
            return Err(Error::Degenerate(format!(
                "whitening needs at least 2 records, got {n}"
            )));
        }
        let p = corpus.dim();
        let mut mean = DVector::zeros(p);
        for r in corpus.records() {
            mean += &r.values;
        }
        mean /= n as f64;

        let mut cov = DMatrix::zeros(p, p);
        for r in corpus.records() {
            let d = &r.values - &mean;
            cov.ger(1.0, &d, &d, 1.0);
        }
        cov /= n as f64;

        let eig = cov.symmetric_eigen();
        let largest = eig.eigenvalues.max();
        let smallest = eig.eigenvalues.min();
        if smallest <= RANK_TOLERANCE * largest.max(f64::MIN_POSITIVE) {
            return Err(Error::RankDeficient {
                smallest_eigenvalue: smallest,
            });
        }
        let inv_sqrt = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
        let q = &eig.eigenvectors;
        let transform = q * DMatrix::from_diagonal(&inv_sqrt) * q.transpose();
        Ok(Self { mean, transform })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_vector(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "whitening".into(),
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(&self.transform * (x - &self.mean))
    }

    pub fn apply(&self, corpus: &IVectorCorpus) -> Result<IVectorCorpus> {
        if corpus.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "whitening".into(),
                expected: self.dim(),
                found: corpus.dim(),
            });
        }
        corpus.map_values(|r| self.apply_vector(&r.values))
    }
}
