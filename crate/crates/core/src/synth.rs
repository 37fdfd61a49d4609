//! Synthetic labeled corpora drawn from a ground-truth GRBM or PLDA model.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::data::{CountRange, IVectorCorpus, IVectorRecord};
use crate::grbm::{generate_speaker_gibbs, write_model, ExactModel, GrbmParams, SpeakerData, DEFAULT_GIBBS_BURN_IN};
use crate::plda::{write_plda, PldaParams};
use crate::scoring::content_hash;
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampler {
    /// Exact ancestral sampling through the enumerated latent prior.
    Exact,
    /// Block Gibbs chain, for models beyond the enumeration cap.
    Gibbs,
    /// Linear-Gaussian PLDA sampling.
    Plda,
}

impl Sampler {
    fn as_str(self) -> &'static str {
        match self {
            Sampler::Exact => "exact",
            Sampler::Gibbs => "gibbs",
            Sampler::Plda => "plda",
        }
    }
}

/// Provenance of a synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthManifest {
    pub seed: u64,
    pub n_speakers: usize,
    pub per_speaker: CountRange,
    pub n_vectors: usize,
    pub sampler: Sampler,
    pub truth_hash: String,
}

impl SynthManifest {
    /// `key value` lines.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "seed {}", self.seed)?;
        writeln!(w, "speakers {}", self.n_speakers)?;
        writeln!(w, "per_speaker {}:{}", self.per_speaker.lo, self.per_speaker.hi)?;
        writeln!(w, "vectors {}", self.n_vectors)?;
        writeln!(w, "sampler {}", self.sampler.as_str())?;
        writeln!(w, "truth_hash {}", self.truth_hash)?;
        Ok(())
    }
}

fn check_range(range: CountRange) -> Result<()> {
    if range.lo == 0 || range.lo > range.hi {
        return Err(Error::InvalidArgument(format!(
            "invalid vectors-per-speaker range {}:{}",
            range.lo, range.hi
        )));
    }
    Ok(())
}

/// Duration attached to synthetic records; above the usual quality cutoff.
pub const SYNTH_DURATION_SECONDS: f64 = 60.0;

pub fn speaker_id(index: usize) -> String {
    format!("spk{index:05}")
}

fn assemble(dim: usize, speakers: Vec<SpeakerData>) -> Result<IVectorCorpus> {
    let records = speakers
        .into_iter()
        .enumerate()
        .flat_map(|(i, data)| {
            let spk = speaker_id(i);
            data.vectors()
                .iter()
                .enumerate()
                .map(|(n, x)| IVectorRecord {
                    vector_id: format!("{spk}_{n:03}"),
                    speaker_id: Some(spk.clone()),
                    duration_seconds: SYNTH_DURATION_SECONDS,
                    values: x.clone(),
                })
                .collect::<Vec<_>>()
        })
        .collect();
    IVectorCorpus::new(dim, records)
}

/// Per speaker: `N` uniform in the range, then a draw from the `N`-order
/// model. Each speaker has its own random stream, so the output does not
/// depend on scheduling.
pub fn synth_corpus(
    truth: &GrbmParams,
    n_speakers: usize,
    per_speaker: CountRange,
    seed: u64,
) -> Result<(IVectorCorpus, SynthManifest)> {
    check_range(per_speaker)?;
    truth.validate()?;
    let exact = ExactModel::new(truth).ok();
    let speakers = (0..n_speakers)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, &[i as u64]);
            let n = r.random_range(per_speaker.lo..=per_speaker.hi);
            match &exact {
                Some(m) => m.generate_speaker(n, &mut r),
                None => generate_speaker_gibbs(truth, n, DEFAULT_GIBBS_BURN_IN, &mut r),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let corpus = assemble(truth.dim_p(), speakers)?;
    let mut bytes = Vec::new();
    write_model(truth, &mut bytes)?;
    let manifest = SynthManifest {
        seed,
        n_speakers,
        per_speaker,
        n_vectors: corpus.len(),
        sampler: if exact.is_some() { Sampler::Exact } else { Sampler::Gibbs },
        truth_hash: content_hash(&bytes),
    };
    Ok((corpus, manifest))
}

pub fn synth_plda_corpus(
    truth: &PldaParams,
    n_speakers: usize,
    per_speaker: CountRange,
    seed: u64,
) -> Result<(IVectorCorpus, SynthManifest)> {
    check_range(per_speaker)?;
    truth.validate()?;
    let speakers = (0..n_speakers)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, &[i as u64]);
            let n = r.random_range(per_speaker.lo..=per_speaker.hi);
            truth.sample_speaker(n, &mut r)
        })
        .collect::<Result<Vec<_>>>()?;
    let corpus = assemble(truth.dim(), speakers)?;
    let mut bytes = Vec::new();
    write_plda(truth, &mut bytes)?;
    let manifest = SynthManifest {
        seed,
        n_speakers,
        per_speaker,
        n_vectors: corpus.len(),
        sampler: Sampler::Plda,
        truth_hash: content_hash(&bytes),
    };
    Ok((corpus, manifest))
}

/// Random ground truth with speaker columns of norm 4 and channel columns of
/// norm 1.5, unit variances, zero hidden biases and the visible bias that
/// centers the data. When `dim_s + dim_c <= dim_p` the columns are mutually
/// orthogonal, which makes the hidden prior uniform; otherwise the directions
/// are independent Gaussian draws.
pub fn random_truth(dim_p: usize, dim_s: usize, dim_c: usize, seed: u64) -> Result<GrbmParams> {
    if dim_p == 0 || dim_s == 0 || dim_c == 0 {
        return Err(Error::InvalidArgument("model dimensions must be positive".into()));
    }
    let mut r = rng::seeded(seed);
    let k = dim_s + dim_c;
    let raw = DMatrix::from_fn(dim_p, k, |_, _| r.sample::<f64, _>(StandardNormal));
    let directions = if k <= dim_p {
        raw.qr().q()
    } else {
        let mut m = raw;
        for mut col in m.column_iter_mut() {
            col.normalize_mut();
        }
        m
    };
    let mut speaker_loading = directions.columns(0, dim_s).into_owned();
    let mut channel_loading = directions.columns(dim_s, dim_c).into_owned();
    speaker_loading *= 4.0;
    channel_loading *= 1.5;
    let visible_bias = -0.5 * (speaker_loading.column_sum() + channel_loading.column_sum());
    Ok(GrbmParams {
        visible_bias,
        speaker_bias: DVector::zeros(dim_s),
        channel_bias: DVector::zeros(dim_c),
        speaker_loading,
        channel_loading,
        log_variance: DVector::zeros(dim_p),
    })
}
