//! Shared fixtures for unit tests.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::grbm::{binary_config, GrbmParams, LatentState};

pub fn random_params(rng: &mut impl Rng, p: usize, ds: usize, dc: usize) -> GrbmParams {
    let mut n = |scale: f64| scale * rng.sample::<f64, _>(StandardNormal);
    GrbmParams {
        visible_bias: DVector::from_fn(p, |_, _| n(0.5)),
        speaker_bias: DVector::from_fn(ds, |_, _| n(0.5)),
        channel_bias: DVector::from_fn(dc, |_, _| n(0.5)),
        speaker_loading: DMatrix::from_fn(p, ds, |_, _| n(0.6)),
        channel_loading: DMatrix::from_fn(p, dc, |_, _| n(0.6)),
        log_variance: DVector::from_fn(p, |_, _| n(0.3)),
    }
}

pub fn random_vec(rng: &mut impl Rng, p: usize) -> DVector<f64> {
    DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Every joint configuration of one speaker factor and `n` channel factors.
pub fn all_latent_states(dim_s: usize, dim_c: usize, n: usize) -> impl Iterator<Item = LatentState> {
    let total = 1usize << (dim_s + n * dim_c);
    (0..total).map(move |k| LatentState {
        speaker: binary_config(k & ((1 << dim_s) - 1), dim_s),
        channel: (0..n)
            .map(|i| binary_config((k >> (dim_s + i * dim_c)) & ((1 << dim_c) - 1), dim_c))
            .collect(),
    })
}
