//! Maximum-likelihood training by mini-batch gradient ascent with momentum.
//!
//! The per-speaker gradient of `log P_N(X)` is the positive phase evaluated at
//! the data minus its expectation under the model. The expectation is
//! replaced by the positive phase evaluated at the end of an m-step
//! alternating Gibbs chain started from the speaker's own data.

use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::data::IVectorCorpus;
use crate::grbm::{GrbmParams, ParamGradient, SpeakerData};
use crate::scoring::{score_corpora, Scorer};
use crate::{eval, rng, Error, Result};

pub type GradientAccumulator = ParamGradient;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_speakers: usize,
    pub epochs: usize,
    pub cd_steps: usize,
    pub learn_sigma: bool,
    pub init_weight_std: f64,
    pub seed: u64,
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.5,
            weight_decay: 0.0,
            batch_speakers: 256,
            epochs: 40,
            cd_steps: 1,
            learn_sigma: false,
            init_weight_std: 0.01,
            seed: 0,
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be non-negative");
        }
        if self.cd_steps == 0 {
            return bad("cd_steps must be at least 1");
        }
        if self.batch_speakers == 0 {
            return bad("batch_speakers must be at least 1");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be at least 1");
        }
        if !(self.init_weight_std >= 0.0) {
            return bad("init_weight_std must be non-negative");
        }
        Ok(())
    }
}

/// Zero biases, unit variances, loading entries drawn from
/// `Normal(0, init_weight_std²)`.
pub fn init_params<R: Rng + ?Sized>(
    dim_p: usize,
    dim_s: usize,
    dim_c: usize,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<GrbmParams> {
    if dim_p == 0 || dim_s == 0 || dim_c == 0 {
        return Err(Error::InvalidArgument("model dimensions must be positive".into()));
    }
    let normal = Normal::new(0.0, config.init_weight_std)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut params = GrbmParams::zeros(dim_p, dim_s, dim_c);
    params.speaker_loading = DMatrix::from_fn(dim_p, dim_s, |_, _| normal.sample(rng));
    params.channel_loading = DMatrix::from_fn(dim_p, dim_c, |_, _| normal.sample(rng));
    Ok(params)
}

/// Gradient of `log Σ_{s,C} exp(−E_N(X, s, C))` using the factorized
/// posteriors.
pub fn positive_gradient(params: &GrbmParams, data: &SpeakerData) -> Result<ParamGradient> {
    let n = data.len() as f64;
    let prec = params.precision();
    let ps = params.posterior_speaker(data)?;
    let scaled_sum = data.sum().component_mul(&prec);

    let mut grad = ParamGradient::zeros_like(params);
    grad.speaker_loading = &scaled_sum * ps.transpose();
    grad.speaker_bias = &ps * n;
    grad.visible_bias = (data.sum() - &params.visible_bias * n).component_mul(&prec);

    let speaker_shift = &params.speaker_loading * &ps;
    grad.log_variance = -scaled_sum.component_mul(&speaker_shift);
    for x in data.vectors() {
        let pc = params.posterior_channel(x)?;
        let scaled = x.component_mul(&prec);
        grad.channel_loading.ger(1.0, &scaled, &pc, 1.0);
        grad.channel_bias += &pc;
        let channel_shift = &params.channel_loading * &pc;
        let centered = x - &params.visible_bias;
        for i in 0..params.dim_p() {
            grad.log_variance[i] +=
                -scaled[i] * channel_shift[i] + 0.5 * centered[i] * centered[i] * prec[i];
        }
    }
    grad.n_vectors = data.len();
    Ok(grad)
}

/// Result of one contrastive-divergence chain.
#[derive(Debug, Clone)]
pub struct CdSample {
    /// Positive-phase gradient evaluated at the reconstruction.
    pub gradient: ParamGradient,
    /// Visible state after `m` steps.
    pub reconstruction: SpeakerData,
}

/// Runs `X → (s⁰, C⁰) → X¹ → … → Xᵐ` and evaluates the positive phase at `Xᵐ`.
pub fn negative_phase_cd<R: Rng + ?Sized>(
    params: &GrbmParams,
    data: &SpeakerData,
    m: usize,
    rng: &mut R,
) -> Result<CdSample> {
    if m == 0 {
        return Err(Error::InvalidArgument("contrastive divergence needs m >= 1".into()));
    }
    let mut visible = data.clone();
    for _ in 0..m {
        let latent = params.sample_latent(&visible, rng)?;
        visible = params.sample_visible(&latent, rng)?;
    }
    Ok(CdSample {
        gradient: positive_gradient(params, &visible)?,
        reconstruction: visible,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    /// Mean squared reconstruction error per coordinate.
    pub recon_err: f64,
    pub cv_min_dcf: Option<f64>,
    /// Mean norm of the normalized batch gradients.
    pub grad_norm: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochReport>,
    /// Epoch whose parameters were returned when cross-validation was used.
    pub best_epoch: Option<usize>,
}

impl TrainReport {
    /// CSV with header `epoch,recon_err,cv_mindcf,grad_norm,seconds`. When
    /// `with_timing` is false the seconds column is written as 0 so reports
    /// of seeded runs compare byte-for-byte.
    pub fn write_csv<W: Write>(&self, mut w: W, with_timing: bool) -> Result<()> {
        writeln!(w, "epoch,recon_err,cv_mindcf,grad_norm,seconds")?;
        for e in &self.epochs {
            let cv = e.cv_min_dcf.map(|v| format!("{v:?}")).unwrap_or_default();
            let secs = if with_timing { e.seconds } else { 0.0 };
            writeln!(w, "{},{:?},{},{:?},{:?}", e.epoch, e.recon_err, cv, e.grad_norm, secs)?;
        }
        Ok(())
    }
}

const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_CD: u64 = 3;

/// Epoch-at-a-time optimizer state.
#[derive(Debug, Clone)]
pub struct Trainer {
    params: GrbmParams,
    velocity: ParamGradient,
    config: TrainConfig,
    speakers: Vec<SpeakerData>,
    epoch: usize,
}

impl Trainer {
    pub fn new(params: GrbmParams, speakers: Vec<SpeakerData>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        params.validate()?;
        if speakers.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if let Some(bad) = speakers.iter().find(|d| d.dim() != params.dim_p()) {
            return Err(Error::DimensionMismatch {
                context: "training data".into(),
                expected: params.dim_p(),
                found: bad.dim(),
            });
        }
        Ok(Self {
            velocity: ParamGradient::zeros_like(&params),
            params,
            config,
            speakers,
            epoch: 0,
        })
    }

    pub fn params(&self) -> &GrbmParams {
        &self.params
    }

    /// Momentum state, one entry per parameter.
    pub fn velocity(&self) -> &ParamGradient {
        &self.velocity
    }

    pub fn into_params(self) -> GrbmParams {
        self.params
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Net gradient `positive(X) − positive(Xᵐ)` of one speaker, plus its
    /// squared reconstruction error.
    fn speaker_gradient(&self, index: usize) -> Result<(ParamGradient, f64)> {
        let data = &self.speakers[index];
        let mut chain_rng = rng::stream(
            self.config.seed,
            &[STREAM_CD, self.epoch as u64, index as u64],
        );
        let pos = positive_gradient(&self.params, data)?;
        let neg = negative_phase_cd(&self.params, data, self.config.cd_steps, &mut chain_rng)?;
        let sq_err: f64 = data
            .vectors()
            .iter()
            .zip(neg.reconstruction.vectors())
            .map(|(x, r)| (x - r).norm_squared())
            .sum();
        Ok((pos.minus(&neg.gradient), sq_err))
    }

    /// One update from the speakers at `indices`: the summed net gradient is
    /// normalized by the batch's total vector count. Returns the normalized
    /// gradient norm and the squared reconstruction error of the batch.
    pub fn step_batch(&mut self, indices: &[usize], batch_no: usize) -> Result<(f64, f64)> {
        let parts = indices
            .par_iter()
            .map(|&k| self.speaker_gradient(k))
            .collect::<Result<Vec<_>>>()?;
        // sequential reduction in batch order keeps the sum deterministic
        let mut grad = ParamGradient::zeros_like(&self.params);
        let mut sq_err = 0.0;
        for (g, e) in &parts {
            grad.add_assign(g);
            sq_err += e;
        }
        let total = grad.n_vectors.max(1) as f64;
        grad.scale(1.0 / total);
        if let Some(slot) = grad.first_non_finite() {
            return Err(Error::NonFiniteGradient {
                epoch: self.epoch,
                batch: batch_no,
                detail: format!("{slot} has non-finite entries (batch of {} speakers)", indices.len()),
            });
        }
        let norm = grad.norm();
        self.apply_update(&grad);
        Ok((norm, sq_err))
    }

    fn apply_update(&mut self, grad: &ParamGradient) {
        let TrainConfig {
            learning_rate: lr,
            momentum: mu,
            weight_decay: wd,
            ..
        } = self.config;
        let v = &mut self.velocity;
        let p = &mut self.params;

        fn step_vec(v: &mut DVector<f64>, g: &DVector<f64>, mu: f64, lr: f64) {
            *v *= mu;
            v.axpy(lr, g, 1.0);
        }
        fn step_mat(v: &mut DMatrix<f64>, g: &DMatrix<f64>, w: &DMatrix<f64>, mu: f64, lr: f64, wd: f64) {
            *v *= mu;
            *v += g * lr;
            if wd != 0.0 {
                *v -= w * (lr * wd);
            }
        }

        step_vec(&mut v.visible_bias, &grad.visible_bias, mu, lr);
        step_vec(&mut v.speaker_bias, &grad.speaker_bias, mu, lr);
        step_vec(&mut v.channel_bias, &grad.channel_bias, mu, lr);
        step_mat(&mut v.speaker_loading, &grad.speaker_loading, &p.speaker_loading, mu, lr, wd);
        step_mat(&mut v.channel_loading, &grad.channel_loading, &p.channel_loading, mu, lr, wd);
        p.visible_bias += &v.visible_bias;
        p.speaker_bias += &v.speaker_bias;
        p.channel_bias += &v.channel_bias;
        p.speaker_loading += &v.speaker_loading;
        p.channel_loading += &v.channel_loading;
        if self.config.learn_sigma {
            step_vec(&mut v.log_variance, &grad.log_variance, mu, lr);
            p.log_variance += &v.log_variance;
        }
    }

    /// Shuffles speakers into batches and applies one update per batch.
    pub fn run_epoch(&mut self) -> Result<EpochReport> {
        let start = Instant::now();
        let mut order: Vec<usize> = (0..self.speakers.len()).collect();
        order.shuffle(&mut rng::stream(self.config.seed, &[STREAM_SHUFFLE, self.epoch as u64]));

        let mut norms = Vec::new();
        let mut sq_err = 0.0;
        for (b, batch) in order.chunks(self.config.batch_speakers).enumerate() {
            let (norm, err) = self.step_batch(batch, b)?;
            norms.push(norm);
            sq_err += err;
        }
        let n_vectors: usize = self.speakers.iter().map(SpeakerData::len).sum();
        self.epoch += 1;
        Ok(EpochReport {
            epoch: self.epoch,
            recon_err: sq_err / (n_vectors * self.params.dim_p()) as f64,
            cv_min_dcf: None,
            grad_norm: norms.iter().sum::<f64>() / norms.len() as f64,
            seconds: start.elapsed().as_secs_f64(),
        })
    }
}

/// Enrollment and test corpora for model selection.
#[derive(Debug, Clone, Copy)]
pub struct CvSets<'a> {
    pub model: &'a IVectorCorpus,
    pub test: &'a IVectorCorpus,
}

/// minDCF of normalized-cosine scoring on the cross-validation trials.
pub fn cv_min_dcf(params: &GrbmParams, cv: CvSets<'_>) -> Result<f64> {
    let scores = score_corpora(&Scorer::CosineNormalized(params), cv.model, cv.test)?;
    Ok(eval::compute_metrics_file(&scores, eval::DEFAULT_FA_COST)?.min_dcf)
}

/// Trains from a fresh initialization. With cross-validation sets, returns
/// the parameters of the epoch with the lowest CV minDCF (earliest on ties);
/// otherwise the final parameters.
pub fn train(
    corpus: &IVectorCorpus,
    dim_s: usize,
    dim_c: usize,
    config: &TrainConfig,
    cv: Option<CvSets<'_>>,
) -> Result<(GrbmParams, TrainReport)> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let speakers: Vec<SpeakerData> = corpus.speaker_data()?.into_iter().map(|(_, d)| d).collect();
    let init = seeded_init(corpus.dim(), dim_s, dim_c, config)?;
    train_from(init, speakers, config, cv)
}

/// Initialization drawn from the init stream of `config.seed`.
pub fn seeded_init(dim_p: usize, dim_s: usize, dim_c: usize, config: &TrainConfig) -> Result<GrbmParams> {
    init_params(dim_p, dim_s, dim_c, config, &mut rng::stream(config.seed, &[STREAM_INIT]))
}

/// Trains starting from given parameters.
pub fn train_from(
    init: GrbmParams,
    speakers: Vec<SpeakerData>,
    config: &TrainConfig,
    cv: Option<CvSets<'_>>,
) -> Result<(GrbmParams, TrainReport)> {
    train_observed(init, speakers, config, cv, &mut |_, _| Ok(()))
}

/// As [`train_from`], calling `observer` after every epoch.
pub fn train_observed(
    init: GrbmParams,
    speakers: Vec<SpeakerData>,
    config: &TrainConfig,
    cv: Option<CvSets<'_>>,
    observer: &mut dyn FnMut(&Trainer, &EpochReport) -> Result<()>,
) -> Result<(GrbmParams, TrainReport)> {
    let mut trainer = Trainer::new(init, speakers, config.clone())?;
    let mut report = TrainReport::default();
    let mut best: Option<(f64, usize, GrbmParams)> = None;
    for _ in 0..config.epochs {
        let mut epoch = trainer.run_epoch()?;
        let due = epoch.epoch % config.eval_every == 0 || epoch.epoch == config.epochs;
        if let (Some(cv), true) = (cv, due) {
            let dcf = cv_min_dcf(trainer.params(), cv)?;
            epoch.cv_min_dcf = Some(dcf);
            if best.as_ref().is_none_or(|(b, _, _)| dcf < *b) {
                best = Some((dcf, epoch.epoch, trainer.params().clone()));
            }
        }
        observer(&trainer, &epoch)?;
        report.epochs.push(epoch);
    }
    match best {
        Some((_, e, params)) => {
            report.best_epoch = Some(e);
            Ok((params, report))
        }
        None => Ok((trainer.into_params(), report)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grbm::{ExactModel, LatentState};
    use crate::testutil::{random_params, random_vec};
    use nalgebra::DVector;

    #[test]
    fn init_follows_config() {
        let cfg = TrainConfig {
            init_weight_std: 0.0,
            ..TrainConfig::default()
        };
        let p = init_params(4, 3, 2, &cfg, &mut rng::seeded(1)).unwrap();
        assert_eq!(p, GrbmParams::zeros(4, 3, 2));

        let cfg = TrainConfig::default();
        let a = init_params(4, 3, 2, &cfg, &mut rng::seeded(2)).unwrap();
        let b = init_params(4, 3, 2, &cfg, &mut rng::seeded(2)).unwrap();
        assert_eq!(a, b);
        assert!(a.visible_bias.iter().chain(a.log_variance.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn init_std_monte_carlo() {
        let cfg = TrainConfig::default();
        let p = init_params(1000, 500, 500, &cfg, &mut rng::seeded(3)).unwrap();
        let entries: Vec<f64> = p
            .speaker_loading
            .iter()
            .chain(p.channel_loading.iter())
            .copied()
            .collect();
        let n = entries.len() as f64;
        let mean = entries.iter().sum::<f64>() / n;
        let std = (entries.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((std - 0.01).abs() < 0.01 * 0.01, "std = {std}");
    }

    #[test]
    fn positive_gradient_symmetric_point() {
        let params = GrbmParams::zeros(3, 2, 2);
        let data = SpeakerData::new(vec![
            DVector::from_column_slice(&[1.0, -2.0, 0.5]),
            DVector::from_column_slice(&[-1.0, 2.0, -0.5]),
        ])
        .unwrap();
        let g = positive_gradient(&params, &data).unwrap();
        assert!(g.speaker_loading.iter().all(|&v| v == 0.0));
        assert!(g.speaker_bias.iter().all(|&v| v == 1.0));
        assert!(g.visible_bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_vector_loading_gradient() {
        let params = random_params(&mut rng::seeded(4), 3, 2, 2);
        let x = random_vec(&mut rng::seeded(5), 3);
        let data = SpeakerData::new(vec![x.clone()]).unwrap();
        let g = positive_gradient(&params, &data).unwrap();
        let ps = params.posterior_speaker(&data).unwrap();
        let var = params.variance();
        for i in 0..3 {
            for j in 0..2 {
                assert!((g.speaker_loading[(i, j)] - ps[j] * x[i] / var[i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn positive_gradient_is_order_invariant() {
        let params = random_params(&mut rng::seeded(6), 3, 2, 2);
        let mut rng = rng::seeded(7);
        let xs: Vec<_> = (0..4).map(|_| random_vec(&mut rng, 3)).collect();
        let mut rev = xs.clone();
        rev.reverse();
        let a = positive_gradient(&params, &SpeakerData::new(xs).unwrap()).unwrap();
        let b = positive_gradient(&params, &SpeakerData::new(rev).unwrap()).unwrap();
        assert!(a.minus(&b).norm() < 1e-12);
    }

    #[test]
    fn cd_with_vanishing_noise_is_deterministic() {
        // signs chosen so every posterior saturates the same way at tiny σ
        let mut params = random_params(&mut rng::seeded(8), 3, 2, 2);
        params.visible_bias = params.visible_bias.abs();
        params.speaker_loading = params.speaker_loading.abs();
        params.channel_loading = -params.channel_loading.abs();
        params.log_variance.fill(-27.6);
        params.speaker_bias.fill(1e6);
        params.channel_bias.fill(-1e6);
        let data = SpeakerData::new(vec![DVector::zeros(3); 2]).unwrap();
        let out = negative_phase_cd(&params, &data, 3, &mut rng::seeded(9)).unwrap();
        let mean = &params.visible_bias + params.speaker_loading.column_sum();
        for x in out.reconstruction.vectors() {
            assert!((x - &mean).amax() < 1e-4);
        }
        assert!(negative_phase_cd(&params, &data, 0, &mut rng::seeded(9)).is_err());
    }

    #[test]
    fn cd_zero_model_speaker_bias_expectation() {
        let params = GrbmParams::zeros(2, 2, 1);
        let n = 3;
        let data = SpeakerData::new(vec![DVector::from_column_slice(&[0.4, -0.2]); n]).unwrap();
        let mut rng = rng::seeded(10);
        let draws = 100_000;
        let mut acc = [0.0; 2];
        let mut acc2 = [0.0; 2];
        for _ in 0..draws {
            let g = negative_phase_cd(&params, &data, 1, &mut rng).unwrap().gradient;
            for j in 0..2 {
                acc[j] += g.speaker_bias[j];
                acc2[j] += g.speaker_bias[j].powi(2);
            }
        }
        for j in 0..2 {
            let mean = acc[j] / draws as f64;
            let var = acc2[j] / draws as f64 - mean * mean;
            let se = (var / draws as f64).sqrt().max(1e-12);
            assert!((mean - n as f64 / 2.0).abs() < 4.0 * se + 1e-12, "{mean}");
        }
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let params = random_params(&mut rng::seeded(11), 3, 2, 2);
        let truth = random_params(&mut rng::seeded(12), 3, 2, 2);
        let exact = ExactModel::new(&truth).unwrap();
        let mut r = rng::seeded(13);
        let speakers: Vec<_> = (0..10).map(|_| exact.generate_speaker(3, &mut r).unwrap()).collect();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            batch_speakers: 4,
            ..TrainConfig::default()
        };
        let (out, report) = train_from(params.clone(), speakers, &cfg, None).unwrap();
        assert_eq!(out, params);
        assert_eq!(report.epochs.len(), 3);
    }

    #[test]
    fn single_step_replay() {
        // one speaker, one batch, momentum 0: update = lr × net gradient / N
        let params = random_params(&mut rng::seeded(14), 3, 2, 2);
        let data = SpeakerData::new((0..3).map(|_| random_vec(&mut rng::seeded(15), 3)).collect()).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.05,
            momentum: 0.0,
            epochs: 1,
            seed: 99,
            learn_sigma: true,
            ..TrainConfig::default()
        };
        let (out, _) = train_from(params.clone(), vec![data.clone()], &cfg, None).unwrap();

        let mut chain = rng::stream(99, &[STREAM_CD, 0, 0]);
        let pos = positive_gradient(&params, &data).unwrap();
        let neg = negative_phase_cd(&params, &data, 1, &mut chain).unwrap().gradient;
        let net = pos.minus(&neg);
        let k = 0.05 / 3.0;
        assert!((out.speaker_loading - (&params.speaker_loading + &net.speaker_loading * k)).amax() < 1e-14);
        assert!((out.channel_bias - (&params.channel_bias + &net.channel_bias * k)).amax() < 1e-14);
        assert!((out.visible_bias - (&params.visible_bias + &net.visible_bias * k)).amax() < 1e-14);
        assert!((out.log_variance - (&params.log_variance + &net.log_variance * k)).amax() < 1e-14);
    }

    #[test]
    fn sigma_frozen_by_default() {
        let params = random_params(&mut rng::seeded(16), 3, 2, 2);
        let data = SpeakerData::new(vec![random_vec(&mut rng::seeded(17), 3); 2]).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let (out, _) = train_from(params.clone(), vec![data], &cfg, None).unwrap();
        assert_eq!(out.log_variance, params.log_variance);
        assert_ne!(out.speaker_loading, params.speaker_loading);
    }

    #[test]
    fn momentum_accumulates_velocity() {
        let params = GrbmParams::zeros(2, 1, 1);
        let data = SpeakerData::new(vec![DVector::from_column_slice(&[1.0, 1.0])]).unwrap();
        let mut t = Trainer::new(
            params,
            vec![data],
            TrainConfig {
                learning_rate: 1.0,
                momentum: 0.5,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        t.velocity.visible_bias = DVector::from_column_slice(&[2.0, 0.0]);
        let mut g = ParamGradient::zeros(2, 1, 1);
        g.visible_bias = DVector::from_column_slice(&[1.0, 1.0]);
        t.apply_update(&g);
        assert_eq!(t.params().visible_bias.as_slice(), &[2.0, 1.0]);
    }

    #[test]
    fn rejects_bad_config_and_empty_data() {
        let params = GrbmParams::zeros(2, 1, 1);
        let bad = TrainConfig {
            momentum: 1.0,
            ..TrainConfig::default()
        };
        let data = SpeakerData::new(vec![DVector::zeros(2)]).unwrap();
        assert!(Trainer::new(params.clone(), vec![data], bad).is_err());
        assert!(matches!(
            Trainer::new(params, vec![], TrainConfig::default()),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut params = GrbmParams::zeros(1, 1, 1);
        params.log_variance[0] = -800.0;
        let data = SpeakerData::new(vec![DVector::from_element(1, 1.0)]).unwrap();
        let mut t = Trainer::new(params, vec![data], TrainConfig::default()).unwrap();
        assert!(matches!(t.run_epoch(), Err(Error::NonFiniteGradient { .. })));
    }

    #[test]
    fn report_csv_layout() {
        let report = TrainReport {
            epochs: vec![EpochReport {
                epoch: 1,
                recon_err: 0.5,
                cv_min_dcf: None,
                grad_norm: 2.0,
                seconds: 1.25,
            }],
            best_epoch: None,
        };
        let mut buf = Vec::new();
        report.write_csv(&mut buf, false).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "epoch,recon_err,cv_mindcf,grad_norm,seconds\n1,0.5,,2.0,0.0\n"
        );
    }

    #[allow(dead_code)]
    fn _latent_unused(_: LatentState) {}
}
