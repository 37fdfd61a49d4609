use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{GrbmParams, LatentState, SpeakerData};
use crate::{Error, Result};

pub const DEFAULT_GIBBS_BURN_IN: usize = 1000;

impl GrbmParams {
    /// `xₙ ~ Normal(b + F s + G cₙ, diag σ²)` independently for each channel
    /// factor in `latent`.
    pub fn sample_visible<R: Rng + ?Sized>(&self, latent: &LatentState, rng: &mut R) -> Result<SpeakerData> {
        if latent.speaker.len() != self.dim_s() {
            return Err(Error::DimensionMismatch {
                context: "speaker factor".into(),
                expected: self.dim_s(),
                found: latent.speaker.len(),
            });
        }
        let std = self.log_variance.map(|z| (0.5 * z).exp());
        let speaker_mean = &self.visible_bias + &self.speaker_loading * &latent.speaker;
        let vectors = latent
            .channel
            .iter()
            .map(|c| {
                if c.len() != self.dim_c() {
                    return Err(Error::DimensionMismatch {
                        context: "channel factor".into(),
                        expected: self.dim_c(),
                        found: c.len(),
                    });
                }
                let mean = &speaker_mean + &self.channel_loading * c;
                Ok(DVector::from_fn(self.dim_p(), |i, _| {
                    mean[i] + std[i] * rng.sample::<f64, _>(StandardNormal)
                }))
            })
            .collect::<Result<Vec<_>>>()?;
        SpeakerData::new(vectors)
    }

    /// Binarizes the factorized posterior with fresh uniform thresholds:
    /// a unit is on iff its posterior exceeds its threshold.
    pub fn sample_latent<R: Rng + ?Sized>(&self, data: &SpeakerData, rng: &mut R) -> Result<LatentState> {
        let speaker = binarize(&self.posterior_speaker(data)?, rng);
        let channel = data
            .vectors()
            .iter()
            .map(|x| Ok(binarize(&self.posterior_channel(x)?, rng)))
            .collect::<Result<Vec<_>>>()?;
        Ok(LatentState { speaker, channel })
    }
}

fn binarize<R: Rng + ?Sized>(probs: &DVector<f64>, rng: &mut R) -> DVector<f64> {
    probs.map(|p| if p > rng.random::<f64>() { 1.0 } else { 0.0 })
}

/// Approximate sample of one speaker by block Gibbs sampling, for models
/// too large for exact prior enumeration. Starts from uniform latents and
/// returns the visible state after `burn_in` sweeps.
pub fn generate_speaker_gibbs<R: Rng + ?Sized>(
    params: &GrbmParams,
    n_vectors: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<SpeakerData> {
    if n_vectors == 0 {
        return Err(Error::InvalidArgument("a speaker needs at least one vector".into()));
    }
    let (ds, dc) = (params.dim_s(), params.dim_c());
    let mut latent = LatentState {
        speaker: DVector::from_fn(ds, |_, _| rng.random_range(0..2) as f64),
        channel: (0..n_vectors)
            .map(|_| DVector::from_fn(dc, |_, _| rng.random_range(0..2) as f64))
            .collect(),
    };
    let mut data = params.sample_visible(&latent, rng)?;
    for _ in 0..burn_in {
        latent = params.sample_latent(&data, rng)?;
        data = params.sample_visible(&latent, rng)?;
    }
    Ok(data)
}
