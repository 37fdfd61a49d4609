use nalgebra::{DMatrix, DVector};

use super::GrbmParams;

/// One slot per parameter tensor, shaped like [`GrbmParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradient {
    pub visible_bias: DVector<f64>,
    pub speaker_bias: DVector<f64>,
    pub channel_bias: DVector<f64>,
    pub speaker_loading: DMatrix<f64>,
    pub channel_loading: DMatrix<f64>,
    pub log_variance: DVector<f64>,
    /// Number of visible vectors the gradient was accumulated over.
    pub n_vectors: usize,
}

impl ParamGradient {
    pub fn zeros_like(params: &GrbmParams) -> Self {
        Self::zeros(params.dim_p(), params.dim_s(), params.dim_c())
    }

    pub fn zeros(p: usize, ds: usize, dc: usize) -> Self {
        Self {
            visible_bias: DVector::zeros(p),
            speaker_bias: DVector::zeros(ds),
            channel_bias: DVector::zeros(dc),
            speaker_loading: DMatrix::zeros(p, ds),
            channel_loading: DMatrix::zeros(p, dc),
            log_variance: DVector::zeros(p),
            n_vectors: 0,
        }
    }

    pub fn add_assign(&mut self, other: &ParamGradient) {
        self.visible_bias += &other.visible_bias;
        self.speaker_bias += &other.speaker_bias;
        self.channel_bias += &other.channel_bias;
        self.speaker_loading += &other.speaker_loading;
        self.channel_loading += &other.channel_loading;
        self.log_variance += &other.log_variance;
        self.n_vectors += other.n_vectors;
    }

    /// `self − other`, keeping `self.n_vectors`.
    pub fn minus(&self, other: &ParamGradient) -> ParamGradient {
        ParamGradient {
            visible_bias: &self.visible_bias - &other.visible_bias,
            speaker_bias: &self.speaker_bias - &other.speaker_bias,
            channel_bias: &self.channel_bias - &other.channel_bias,
            speaker_loading: &self.speaker_loading - &other.speaker_loading,
            channel_loading: &self.channel_loading - &other.channel_loading,
            log_variance: &self.log_variance - &other.log_variance,
            n_vectors: self.n_vectors,
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.visible_bias *= k;
        self.speaker_bias *= k;
        self.channel_bias *= k;
        self.speaker_loading *= k;
        self.channel_loading *= k;
        self.log_variance *= k;
    }

    /// Euclidean norm over all slots.
    pub fn norm(&self) -> f64 {
        self.tensors().iter().map(|t| t.iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Name of the first slot holding a non-finite entry.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        Self::NAMES
            .iter()
            .zip(self.tensors())
            .find(|(_, t)| t.iter().any(|v| !v.is_finite()))
            .map(|(n, _)| *n)
    }

    pub const NAMES: [&'static str; 6] = [
        "visible_bias",
        "speaker_bias",
        "channel_bias",
        "speaker_loading",
        "channel_loading",
        "log_variance",
    ];

    /// Flat views of each slot in [`Self::NAMES`] order.
    pub fn tensors(&self) -> [&[f64]; 6] {
        [
            self.visible_bias.as_slice(),
            self.speaker_bias.as_slice(),
            self.channel_bias.as_slice(),
            self.speaker_loading.as_slice(),
            self.channel_loading.as_slice(),
            self.log_variance.as_slice(),
        ]
    }
}
