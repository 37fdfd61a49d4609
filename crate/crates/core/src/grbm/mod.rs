//! Gaussian-Binary RBM with a shared speaker factor.
//!
//! Energy of one visible vector `x` with speaker factor `s` and channel factor `c`:
//!
//! ```text
//! E(x, s, c) = ½‖(x − b)/σ‖² − fᵀs − gᵀc − (x/σ²)ᵀ(F s + G c)
//! ```
//!
//! A speaker with vectors `X = {x₁..x_N}` shares one `s` and owns one `cₙ` per
//! vector; the N-order model is `P_N(X, s, C) ∝ exp(−Σₙ E(xₙ, s, cₙ))`.

mod gradient;
pub(crate) mod io;
mod model;
mod partition;
mod sample;

pub use gradient::ParamGradient;
pub use io::{read_model, write_model};
pub use partition::{EnumerationCap, ExactModel, LogPartition};
pub use sample::{generate_speaker_gibbs, DEFAULT_GIBBS_BURN_IN};

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GrbmParams {
    /// Visible bias `b` (p).
    pub visible_bias: DVector<f64>,
    /// Speaker hidden bias `f` (dim_s).
    pub speaker_bias: DVector<f64>,
    /// Channel hidden bias `g` (dim_c).
    pub channel_bias: DVector<f64>,
    /// Speaker loading matrix `F` (p × dim_s).
    pub speaker_loading: DMatrix<f64>,
    /// Channel loading matrix `G` (p × dim_c).
    pub channel_loading: DMatrix<f64>,
    /// Log-variances `z = log σ²` (p).
    pub log_variance: DVector<f64>,
}

impl GrbmParams {
    /// All-zero parameters (σ = 1).
    pub fn zeros(dim_p: usize, dim_s: usize, dim_c: usize) -> Self {
        Self {
            visible_bias: DVector::zeros(dim_p),
            speaker_bias: DVector::zeros(dim_s),
            channel_bias: DVector::zeros(dim_c),
            speaker_loading: DMatrix::zeros(dim_p, dim_s),
            channel_loading: DMatrix::zeros(dim_p, dim_c),
            log_variance: DVector::zeros(dim_p),
        }
    }

    pub fn dim_p(&self) -> usize {
        self.visible_bias.len()
    }

    pub fn dim_s(&self) -> usize {
        self.speaker_bias.len()
    }

    pub fn dim_c(&self) -> usize {
        self.channel_bias.len()
    }

    /// Shapes agree and every entry is finite.
    pub fn validate(&self) -> Result<()> {
        let p = self.dim_p();
        let checks = [
            ("speaker loading rows", self.speaker_loading.nrows(), p),
            ("speaker loading columns", self.speaker_loading.ncols(), self.dim_s()),
            ("channel loading rows", self.channel_loading.nrows(), p),
            ("channel loading columns", self.channel_loading.ncols(), self.dim_c()),
            ("log-variance", self.log_variance.len(), p),
        ];
        for (what, found, expected) in checks {
            if found != expected {
                return Err(Error::DimensionMismatch {
                    context: what.into(),
                    expected,
                    found,
                });
            }
        }
        let finite = self.visible_bias.iter()
            .chain(self.speaker_bias.iter())
            .chain(self.channel_bias.iter())
            .chain(self.speaker_loading.iter())
            .chain(self.channel_loading.iter())
            .chain(self.log_variance.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(())
    }

    /// `σ²` elementwise.
    pub fn variance(&self) -> DVector<f64> {
        self.log_variance.map(f64::exp)
    }

    /// `1/σ²` elementwise.
    pub fn precision(&self) -> DVector<f64> {
        self.log_variance.map(|z| (-z).exp())
    }

    pub(crate) fn check_visible(&self, x: &DVector<f64>, context: &str) -> Result<()> {
        if x.len() != self.dim_p() {
            return Err(Error::DimensionMismatch {
                context: context.into(),
                expected: self.dim_p(),
                found: x.len(),
            });
        }
        Ok(())
    }
}

/// The N vectors of one speaker together with their sum `x̄ = Σₙ xₙ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerData {
    vectors: Vec<DVector<f64>>,
    sum: DVector<f64>,
}

impl SpeakerData {
    pub fn new(vectors: Vec<DVector<f64>>) -> Result<Self> {
        let first = vectors
            .first()
            .ok_or_else(|| Error::InvalidArgument("speaker data needs at least one vector".into()))?;
        let p = first.len();
        let mut sum = DVector::zeros(p);
        for v in &vectors {
            if v.len() != p {
                return Err(Error::DimensionMismatch {
                    context: "speaker data".into(),
                    expected: p,
                    found: v.len(),
                });
            }
            sum += v;
        }
        Ok(Self { vectors, sum })
    }

    pub fn vectors(&self) -> &[DVector<f64>] {
        &self.vectors
    }

    pub fn sum(&self) -> &DVector<f64> {
        &self.sum
    }

    /// Number of vectors N.
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.sum.len()
    }

    /// This set with one more vector appended.
    pub fn with_vector(&self, x: &DVector<f64>) -> Result<Self> {
        let mut vectors = self.vectors.clone();
        vectors.push(x.clone());
        Self::new(vectors)
    }
}

/// Binary hidden configuration for one speaker: the shared speaker factor and
/// one channel factor per vector. Entries are 0.0 or 1.0.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub speaker: DVector<f64>,
    pub channel: Vec<DVector<f64>>,
}

impl LatentState {
    pub fn zeros(dim_s: usize, dim_c: usize, n: usize) -> Self {
        Self {
            speaker: DVector::zeros(dim_s),
            channel: vec![DVector::zeros(dim_c); n],
        }
    }

    pub fn is_binary(&self) -> bool {
        self.speaker
            .iter()
            .chain(self.channel.iter().flat_map(|c| c.iter()))
            .all(|&v| v == 0.0 || v == 1.0)
    }
}

/// The `k`-th configuration of `dim` binary units (bit j of `k` is unit j).
pub fn binary_config(k: usize, dim: usize) -> DVector<f64> {
    DVector::from_fn(dim, |j, _| ((k >> j) & 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn speaker_sum_is_cached() {
        let d = SpeakerData::new(vec![
            DVector::from_column_slice(&[1.0, 2.0]),
            DVector::from_column_slice(&[0.5, -1.0]),
        ])
        .unwrap();
        assert_eq!(d.sum().as_slice(), &[1.5, 1.0]);
        assert_eq!(d.len(), 2);
        assert!(SpeakerData::new(vec![]).is_err());
        assert!(SpeakerData::new(vec![DVector::zeros(2), DVector::zeros(3)]).is_err());
    }

    #[test]
    fn validate_shapes() {
        let mut p = GrbmParams::zeros(3, 2, 1);
        assert!(p.validate().is_ok());
        p.speaker_loading = DMatrix::zeros(3, 3);
        assert!(p.validate().is_err());
        let mut q = GrbmParams::zeros(3, 2, 1);
        q.log_variance[0] = f64::NAN;
        assert!(q.validate().is_err());
    }

    #[test]
    fn binary_configs() {
        assert_eq!(binary_config(5, 3).as_slice(), &[1.0, 0.0, 1.0]);
        assert_eq!(binary_config(0, 0).len(), 0);
    }
}
