//! Exact enumeration over hidden configurations for small models.
//!
//! Integrating the energy over one visible vector for a fixed hidden
//! configuration `h = [s; c]` with mean shift `m = F s + G c` gives
//!
//! ```text
//! log A(s, c) = (p/2) log 2π + ½ Σᵢ zᵢ + fᵀs + gᵀc + Σᵢ (bᵢ mᵢ + ½ mᵢ²)/σᵢ²
//! ```
//!
//! For fixed `s` the N channel sums factorize, so
//! `log Z_N = logsumexp_s N · log B_s` with `B_s = Σ_c A(s, c)`.

use nalgebra::DVector;
use rand::Rng;

use super::{binary_config, GrbmParams, LatentState, ParamGradient, SpeakerData};
use crate::numeric::{logsumexp, LN_2PI};
use crate::{Error, Result};

/// `log Z_N` for the N-order model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogPartition {
    pub n_order: usize,
    pub log_z: f64,
}

/// Limits on exact enumeration; above them exact operations refuse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationCap {
    pub max_speaker_dim: usize,
    pub max_channel_dim: usize,
    /// Upper bound on the number of `(s, c)` pairs tabulated per call.
    pub max_configs: usize,
}

impl Default for EnumerationCap {
    fn default() -> Self {
        Self {
            max_speaker_dim: 14,
            max_channel_dim: 14,
            max_configs: 1 << 24,
        }
    }
}

impl EnumerationCap {
    pub fn check(&self, dim_s: usize, dim_c: usize) -> Result<()> {
        if dim_s > self.max_speaker_dim || dim_c > self.max_channel_dim {
            return Err(Error::EnumerationCap(format!(
                "dim_s = {dim_s}, dim_c = {dim_c} (limits {}, {})",
                self.max_speaker_dim, self.max_channel_dim
            )));
        }
        let configs = 1usize << (dim_s + dim_c);
        if configs > self.max_configs {
            return Err(Error::EnumerationCap(format!(
                "{configs} hidden configurations exceed the limit of {}",
                self.max_configs
            )));
        }
        Ok(())
    }
}

/// Tabulated per-configuration Gaussian integrals of a model.
#[derive(Debug, Clone)]
pub struct ExactModel {
    params: GrbmParams,
    /// `log A(s, c)`, row-major by `s` index.
    log_a: Vec<f64>,
    /// `log B_s`.
    log_b: Vec<f64>,
    n_speaker_configs: usize,
    n_channel_configs: usize,
}

impl ExactModel {
    pub fn new(params: &GrbmParams) -> Result<Self> {
        Self::with_cap(params, EnumerationCap::default())
    }

    pub fn with_cap(params: &GrbmParams, cap: EnumerationCap) -> Result<Self> {
        params.validate()?;
        let (p, ds, dc) = (params.dim_p(), params.dim_s(), params.dim_c());
        cap.check(ds, dc)?;
        let ns = 1usize << ds;
        let nc = 1usize << dc;
        let prec = params.precision();
        let constant = 0.5 * p as f64 * LN_2PI + 0.5 * params.log_variance.sum();

        let speaker_shift: Vec<DVector<f64>> =
            (0..ns).map(|k| &params.speaker_loading * binary_config(k, ds)).collect();
        let speaker_bias: Vec<f64> =
            (0..ns).map(|k| params.speaker_bias.dot(&binary_config(k, ds))).collect();
        let channel_shift: Vec<DVector<f64>> =
            (0..nc).map(|k| &params.channel_loading * binary_config(k, dc)).collect();
        let channel_bias: Vec<f64> =
            (0..nc).map(|k| params.channel_bias.dot(&binary_config(k, dc))).collect();

        let mut log_a = Vec::with_capacity(ns * nc);
        let mut log_b = Vec::with_capacity(ns);
        for ks in 0..ns {
            let row_start = log_a.len();
            for kc in 0..nc {
                let mut quad = 0.0;
                for i in 0..p {
                    let m = speaker_shift[ks][i] + channel_shift[kc][i];
                    quad += prec[i] * (params.visible_bias[i] * m + 0.5 * m * m);
                }
                log_a.push(constant + speaker_bias[ks] + channel_bias[kc] + quad);
            }
            log_b.push(logsumexp(&log_a[row_start..]));
        }
        Ok(Self {
            params: params.clone(),
            log_a,
            log_b,
            n_speaker_configs: ns,
            n_channel_configs: nc,
        })
    }

    pub fn params(&self) -> &GrbmParams {
        &self.params
    }

    pub fn log_partition(&self, n_order: usize) -> LogPartition {
        let scaled: Vec<f64> = self.log_b.iter().map(|lb| n_order as f64 * lb).collect();
        LogPartition {
            n_order,
            log_z: logsumexp(&scaled),
        }
    }

    /// `log P_N(s)` for every speaker configuration index.
    pub fn log_prior_speaker(&self, n_order: usize) -> Vec<f64> {
        let scaled: Vec<f64> = self.log_b.iter().map(|lb| n_order as f64 * lb).collect();
        let log_z = logsumexp(&scaled);
        scaled.iter().map(|v| v - log_z).collect()
    }

    /// `log P(c | s)` for one vector, over all channel configurations.
    pub fn log_channel_given_speaker(&self, speaker_index: usize) -> Vec<f64> {
        let row = &self.log_a[speaker_index * self.n_channel_configs..][..self.n_channel_configs];
        row.iter().map(|v| v - self.log_b[speaker_index]).collect()
    }

    /// Exact `∇ log Z_N`, i.e. the model expectation of the positive-phase
    /// gradient under `P_N(X)`.
    pub fn log_partition_gradient(&self, n_order: usize) -> ParamGradient {
        let params = &self.params;
        let (p, ds, dc) = (params.dim_p(), params.dim_s(), params.dim_c());
        let prec = params.precision();
        let b = &params.visible_bias;
        let n = n_order as f64;
        let prior = self.log_prior_speaker(n_order);

        let mut grad = ParamGradient::zeros_like(params);
        let mut per_channel = vec![DVector::<f64>::zeros(p); self.n_channel_configs];
        let mut channel_weight = vec![0.0; self.n_channel_configs];

        for ks in 0..self.n_speaker_configs {
            let s = binary_config(ks, ds);
            let fs = &params.speaker_loading * &s;
            let speaker_weight = n * prior[ks].exp();
            let mut per_speaker = DVector::<f64>::zeros(p);
            for (kc, lw) in self.log_channel_given_speaker(ks).into_iter().enumerate() {
                let w = speaker_weight * lw.exp();
                if w == 0.0 {
                    continue;
                }
                let c = binary_config(kc, dc);
                let m = &fs + &params.channel_loading * &c;
                // E[x | h] = b + m, so E[x/σ²] = (b + m)/σ²
                let mean_scaled = (b + &m).component_mul(&prec);
                per_speaker.axpy(w, &mean_scaled, 1.0);
                per_channel[kc].axpy(w, &mean_scaled, 1.0);
                channel_weight[kc] += w;
                grad.visible_bias.axpy(w, &m.component_mul(&prec), 1.0);
                for i in 0..p {
                    grad.log_variance[i] +=
                        w * (0.5 - prec[i] * (b[i] * m[i] + 0.5 * m[i] * m[i]));
                }
            }
            grad.speaker_bias.axpy(speaker_weight, &s, 1.0);
            grad.speaker_loading.ger(1.0, &per_speaker, &s, 1.0);
        }
        for kc in 0..self.n_channel_configs {
            let c = binary_config(kc, dc);
            grad.channel_bias.axpy(channel_weight[kc], &c, 1.0);
            grad.channel_loading.ger(1.0, &per_channel[kc], &c, 1.0);
        }
        grad.n_vectors = n_order;
        grad
    }

    /// Draws `(s, C)` from the prior `P_N(s, C) = ∫ P_N(X, s, C) dX`.
    pub fn sample_prior<R: Rng + ?Sized>(&self, n_order: usize, rng: &mut R) -> LatentState {
        let ks = sample_log_categorical(&self.log_prior_speaker(n_order), rng);
        let channel_weights = self.log_channel_given_speaker(ks);
        let channel = (0..n_order)
            .map(|_| binary_config(sample_log_categorical(&channel_weights, rng), self.params.dim_c()))
            .collect();
        LatentState {
            speaker: binary_config(ks, self.params.dim_s()),
            channel,
        }
    }

    /// Exact ancestral sample of one speaker: prior over latents, then the
    /// conditional Gaussian over vectors.
    pub fn generate_speaker<R: Rng + ?Sized>(&self, n_vectors: usize, rng: &mut R) -> Result<SpeakerData> {
        if n_vectors == 0 {
            return Err(Error::InvalidArgument("a speaker needs at least one vector".into()));
        }
        let latent = self.sample_prior(n_vectors, rng);
        self.params.sample_visible(&latent, rng)
    }

    /// Exact per-coordinate variance of a single visible vector under `P_1`.
    pub fn visible_variance(&self) -> DVector<f64> {
        let params = &self.params;
        let (p, ds, dc) = (params.dim_p(), params.dim_s(), params.dim_c());
        let prior = self.log_prior_speaker(1);
        let mut mean = DVector::zeros(p);
        let mut second = DVector::zeros(p);
        for ks in 0..self.n_speaker_configs {
            let fs = &params.speaker_loading * binary_config(ks, ds);
            for (kc, lw) in self.log_channel_given_speaker(ks).into_iter().enumerate() {
                let w = (prior[ks] + lw).exp();
                let mu = &params.visible_bias + &fs + &params.channel_loading * binary_config(kc, dc);
                mean.axpy(w, &mu, 1.0);
                second.axpy(w, &mu.component_mul(&mu), 1.0);
            }
        }
        second + params.variance() - mean.component_mul(&mean)
    }
}

/// Index drawn with probability proportional to `exp(log_weights[k])`.
pub(crate) fn sample_log_categorical<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> usize {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_weights.iter().map(|w| (w - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, w) in weights.iter().enumerate() {
        if u < *w {
            return k;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

impl GrbmParams {
    /// `log Z_N` by exact enumeration under the default cap.
    pub fn log_partition_exact(&self, n_order: usize) -> Result<LogPartition> {
        Ok(ExactModel::new(self)?.log_partition(n_order))
    }

    /// Exact ancestral sample under the default cap. Use
    /// [`super::generate_speaker_gibbs`] for larger models.
    pub fn generate_speaker<R: Rng + ?Sized>(&self, n_vectors: usize, rng: &mut R) -> Result<SpeakerData> {
        ExactModel::new(self)?.generate_speaker(n_vectors, rng)
    }
}
