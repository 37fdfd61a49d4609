//! Two-subspace Gaussian PLDA: `x = mu + V y + U wₙ + ε`, with `y` shared by
//! all vectors of a speaker, `wₙ` per vector and `ε ~ Normal(0, diag D)`.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::data::IVectorCorpus;
use crate::grbm::io::{read_f64s, write_f64s};
use crate::grbm::SpeakerData;
use crate::numeric::LN_2PI;
use crate::{rng, Error, Result};

pub const DEFAULT_EM_ITERS: usize = 20;
/// Lower bound on residual variances after an M-step.
const RESIDUAL_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct PldaParams {
    pub mean: DVector<f64>,
    /// `V`, p × q_s.
    pub speaker_loading: DMatrix<f64>,
    /// `U`, p × q_c.
    pub channel_loading: DMatrix<f64>,
    /// Diagonal of the residual covariance.
    pub residual: DVector<f64>,
}

impl PldaParams {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn dim_speaker(&self) -> usize {
        self.speaker_loading.ncols()
    }

    pub fn dim_channel(&self) -> usize {
        self.channel_loading.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.dim();
        for (name, rows) in [
            ("speaker loading rows", self.speaker_loading.nrows()),
            ("channel loading rows", self.channel_loading.nrows()),
            ("residual", self.residual.len()),
        ] {
            if rows != p {
                return Err(Error::DimensionMismatch {
                    context: format!("PLDA {name}"),
                    expected: p,
                    found: rows,
                });
            }
        }
        let finite = self
            .mean
            .iter()
            .chain(self.speaker_loading.iter())
            .chain(self.channel_loading.iter())
            .chain(self.residual.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("PLDA parameters".into()));
        }
        if self.residual.iter().any(|&d| d <= 0.0) {
            return Err(Error::InvalidArgument("PLDA residual variances must be positive".into()));
        }
        Ok(())
    }

    /// More latent dimensions than observed ones.
    pub fn is_overparameterized(&self) -> bool {
        self.dim_speaker() + self.dim_channel() > self.dim()
    }

    fn check_vector(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "PLDA input vector".into(),
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    pub fn prepare(&self) -> Result<PreparedPlda<'_>> {
        PreparedPlda::new(self)
    }

    /// Log-likelihood of one speaker's vectors under the shared-factor model.
    pub fn log_likelihood(&self, data: &SpeakerData) -> Result<f64> {
        self.prepare()?.log_likelihood(data)
    }

    /// Posterior over the latent factors of one speaker.
    pub fn posterior(&self, data: &SpeakerData) -> Result<SpeakerPosterior> {
        self.prepare()?.posterior(data)
    }

    /// Draws a speaker: one `y`, then `n` vectors each with its own `w`.
    pub fn sample_speaker<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<SpeakerData> {
        let std = Normal::new(0.0, 1.0).expect("unit normal");
        let y = DVector::from_fn(self.dim_speaker(), |_, _| std.sample(rng));
        let center = &self.mean + &self.speaker_loading * y;
        let noise_std = self.residual.map(f64::sqrt);
        let vectors = (0..n)
            .map(|_| {
                let w = DVector::from_fn(self.dim_channel(), |_, _| std.sample(rng));
                let mut x = &center + &self.channel_loading * w;
                for i in 0..x.len() {
                    x[i] += noise_std[i] * std.sample(rng);
                }
                x
            })
            .collect();
        SpeakerData::new(vectors)
    }
}

/// Posterior moments of `y` and each `wₙ` for one speaker.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerPosterior {
    pub speaker_mean: DVector<f64>,
    pub speaker_cov: DMatrix<f64>,
    pub channel_means: Vec<DVector<f64>>,
    /// Shared by all vectors of the speaker.
    pub channel_cov: DMatrix<f64>,
    /// `Cov(y, wₙ)`, q_s × q_c, identical for every n.
    pub cross_cov: DMatrix<f64>,
}

/// Parameter-dependent quantities shared by every speaker.
#[derive(Debug, Clone)]
pub struct PreparedPlda<'a> {
    params: &'a PldaParams,
    inv_residual: DVector<f64>,
    /// Cholesky of `P_w = I + Uᵀ D⁻¹ U`.
    channel_precision: Cholesky<f64, Dyn>,
    /// `A = P_w⁻¹ Uᵀ D⁻¹`, q_c × p.
    channel_gain: DMatrix<f64>,
    /// `Σ_w⁻¹ V` with `Σ_w = U Uᵀ + D`.
    within_inv_v: DMatrix<f64>,
    /// `Vᵀ Σ_w⁻¹ V`.
    speaker_info: DMatrix<f64>,
    log_det_within: f64,
}

fn cholesky(m: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m).ok_or_else(|| Error::Degenerate(format!("{what} is not positive definite")))
}

fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

impl<'a> PreparedPlda<'a> {
    pub fn new(params: &'a PldaParams) -> Result<Self> {
        params.validate()?;
        let inv_residual = params.residual.map(|d| 1.0 / d);
        let u = &params.channel_loading;
        let v = &params.speaker_loading;
        let d_inv_u = DMatrix::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)] * inv_residual[i]);
        let qc = u.ncols();
        let channel_precision = cholesky(DMatrix::identity(qc, qc) + u.tr_mul(&d_inv_u), "channel precision")?;
        let channel_gain = channel_precision.solve(&d_inv_u.transpose());
        // Woodbury: Σ_w⁻¹ = D⁻¹ − D⁻¹ U P_w⁻¹ Uᵀ D⁻¹
        let d_inv_v = DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * inv_residual[i]);
        let within_inv_v = &d_inv_v - &d_inv_u * (&channel_gain * v);
        let speaker_info = v.tr_mul(&within_inv_v);
        let log_det_within =
            log_det(&channel_precision) + params.residual.iter().map(|d| d.ln()).sum::<f64>();
        Ok(Self {
            params,
            inv_residual,
            channel_precision,
            channel_gain,
            within_inv_v,
            speaker_info,
            log_det_within,
        })
    }

    pub fn params(&self) -> &PldaParams {
        self.params
    }

    fn centered(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.params.check_vector(x)?;
        Ok(x - &self.params.mean)
    }

    /// `rᵀ Σ_w⁻¹ r`.
    fn within_quad(&self, r: &DVector<f64>) -> f64 {
        let diag: f64 = r.iter().zip(self.inv_residual.iter()).map(|(a, w)| a * a * w).sum();
        let ut = self.params.channel_loading.tr_mul(&r.component_mul(&self.inv_residual));
        diag - ut.dot(&self.channel_precision.solve(&ut))
    }

    /// `M = I + n Vᵀ Σ_w⁻¹ V`.
    fn speaker_precision(&self, n: usize) -> Result<Cholesky<f64, Dyn>> {
        let qs = self.params.dim_speaker();
        cholesky(DMatrix::identity(qs, qs) + &self.speaker_info * n as f64, "speaker precision")
    }

    /// `t = Vᵀ Σ_w⁻¹ Σₙ rₙ`; linear in the centered sum.
    pub fn speaker_stat(&self, centered_sum: &DVector<f64>) -> DVector<f64> {
        self.within_inv_v.tr_mul(centered_sum)
    }

    /// `−½ log|M| + ½ tᵀ M⁻¹ t` for `n` vectors with statistic `t`: the part
    /// of the log-likelihood that couples vectors through `y`.
    pub fn coupling_from_stat(&self, n: usize, t: &DVector<f64>) -> Result<f64> {
        let m = self.speaker_precision(n)?;
        Ok(-0.5 * log_det(&m) + 0.5 * t.dot(&m.solve(t)))
    }

    pub fn coupling_term(&self, n: usize, centered_sum: &DVector<f64>) -> Result<f64> {
        self.coupling_from_stat(n, &self.speaker_stat(centered_sum))
    }

    pub fn center(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.centered(x)
    }

    fn independent_term(&self, r: &DVector<f64>) -> f64 {
        -0.5 * (self.params.dim() as f64 * LN_2PI + self.log_det_within + self.within_quad(r))
    }

    pub fn log_likelihood(&self, data: &SpeakerData) -> Result<f64> {
        let mut total = 0.0;
        let mut sum = DVector::zeros(self.params.dim());
        for x in data.vectors() {
            let r = self.centered(x)?;
            total += self.independent_term(&r);
            sum += r;
        }
        Ok(total + self.coupling_term(data.len(), &sum)?)
    }

    pub fn posterior(&self, data: &SpeakerData) -> Result<SpeakerPosterior> {
        let rs = data.vectors().iter().map(|x| self.centered(x)).collect::<Result<Vec<_>>>()?;
        let sum = rs.iter().fold(DVector::zeros(self.params.dim()), |acc, r| acc + r);
        let m = self.speaker_precision(rs.len())?;
        let speaker_cov = m.inverse();
        let speaker_mean = &speaker_cov * self.within_inv_v.tr_mul(&sum);

        let v = &self.params.speaker_loading;
        let av = &self.channel_gain * v;
        let shift = v * &speaker_mean;
        let channel_means = rs.iter().map(|r| &self.channel_gain * (r - &shift)).collect();
        let channel_cov = self.channel_precision.inverse() + &av * &speaker_cov * av.transpose();
        let cross_cov = -(&speaker_cov * av.transpose());
        Ok(SpeakerPosterior {
            speaker_mean,
            speaker_cov,
            channel_means,
            channel_cov,
            cross_cov,
        })
    }

    /// `log p(E ∪ {t}) − log p(E) − log p(t)`; the per-vector terms cancel.
    pub fn score(&self, enrollment: &[DVector<f64>], test: &DVector<f64>) -> Result<f64> {
        if enrollment.is_empty() {
            return Err(Error::InvalidArgument("enrollment set is empty".into()));
        }
        let mut sum = DVector::zeros(self.params.dim());
        for x in enrollment {
            sum += self.centered(x)?;
        }
        let rt = self.centered(test)?;
        let n = enrollment.len();
        Ok(self.coupling_term(n + 1, &(&sum + &rt))?
            - self.coupling_term(n, &sum)?
            - self.coupling_term(1, &rt)?)
    }

    /// Sufficient statistics of one speaker for the M-step.
    fn em_stats(&self, data: &SpeakerData) -> Result<EmStats> {
        let post = self.posterior(data)?;
        let (qs, qc) = (self.params.dim_speaker(), self.params.dim_channel());
        let q = qs + qc;
        let p = self.params.dim();
        let mut stats = EmStats::zeros(p, q);
        let mut second = DMatrix::zeros(q, q);
        second.view_mut((0, 0), (qs, qs)).copy_from(&post.speaker_cov);
        second.view_mut((0, qs), (qs, qc)).copy_from(&post.cross_cov);
        second.view_mut((qs, 0), (qc, qs)).copy_from(&post.cross_cov.transpose());
        second.view_mut((qs, qs), (qc, qc)).copy_from(&post.channel_cov);
        for (x, w) in data.vectors().iter().zip(&post.channel_means) {
            let r = x - &self.params.mean;
            let mut z = DVector::zeros(q);
            z.rows_mut(0, qs).copy_from(&post.speaker_mean);
            z.rows_mut(qs, qc).copy_from(w);
            stats.rz.ger(1.0, &r, &z, 1.0);
            stats.zz += &second;
            stats.zz.ger(1.0, &z, &z, 1.0);
            stats.rr += r.component_mul(&r);
        }
        stats.count = data.len();
        Ok(stats)
    }
}

#[derive(Debug, Clone)]
struct EmStats {
    rz: DMatrix<f64>,
    zz: DMatrix<f64>,
    rr: DVector<f64>,
    count: usize,
}

impl EmStats {
    fn zeros(p: usize, q: usize) -> Self {
        Self {
            rz: DMatrix::zeros(p, q),
            zz: DMatrix::zeros(q, q),
            rr: DVector::zeros(p),
            count: 0,
        }
    }

    fn add(&mut self, o: &EmStats) {
        self.rz += &o.rz;
        self.zz += &o.zz;
        self.rr += &o.rr;
        self.count += o.count;
    }

    fn is_finite(&self) -> bool {
        self.rz.iter().chain(self.zz.iter()).chain(self.rr.iter()).all(|v| v.is_finite())
    }
}

/// Total log-likelihood of a set of speakers.
pub fn log_likelihood(params: &PldaParams, speakers: &[SpeakerData]) -> Result<f64> {
    let prepared = params.prepare()?;
    let parts = speakers
        .par_iter()
        .map(|d| prepared.log_likelihood(d))
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.iter().sum())
}

/// One EM iteration; the mean stays fixed.
pub fn em_step(params: &PldaParams, speakers: &[SpeakerData]) -> Result<PldaParams> {
    let prepared = params.prepare()?;
    let parts = speakers
        .par_iter()
        .map(|d| prepared.em_stats(d))
        .collect::<Result<Vec<_>>>()?;
    let (qs, qc) = (params.dim_speaker(), params.dim_channel());
    let mut stats = EmStats::zeros(params.dim(), qs + qc);
    for s in &parts {
        stats.add(s);
    }
    if !stats.is_finite() {
        return Err(Error::NonFinite("PLDA E-step statistics".into()));
    }
    // [V U] = (Σ r E[z]ᵀ)(Σ E[z zᵀ])⁻¹
    let zz = cholesky(stats.zz.clone(), "latent second moment")?;
    let loading = zz.solve(&stats.rz.transpose()).transpose();
    let fitted = loading.component_mul(&stats.rz).column_sum();
    let total = stats.count as f64;
    let residual = DVector::from_fn(params.dim(), |i, _| {
        ((stats.rr[i] - fitted[i]) / total).max(RESIDUAL_FLOOR)
    });
    Ok(PldaParams {
        mean: params.mean.clone(),
        speaker_loading: loading.columns(0, qs).into_owned(),
        channel_loading: loading.columns(qs, qc).into_owned(),
        residual,
    })
}

/// Sample mean, random loadings with entries of standard deviation
/// `0.1 × mean feature std`, residual = per-coordinate sample variance.
pub fn init_params<R: Rng + ?Sized>(
    speakers: &[SpeakerData],
    dim_speaker: usize,
    dim_channel: usize,
    rng: &mut R,
) -> Result<PldaParams> {
    let first = speakers.first().ok_or(Error::EmptyCorpus)?;
    let p = first.dim();
    let count: usize = speakers.iter().map(SpeakerData::len).sum();
    let mean = speakers.iter().fold(DVector::zeros(p), |acc, d| acc + d.sum()) / count as f64;
    let mut var = DVector::zeros(p);
    for x in speakers.iter().flat_map(|d| d.vectors()) {
        let r = x - &mean;
        var += r.component_mul(&r);
    }
    var /= count as f64;
    if var.iter().any(|&v| v <= 0.0) {
        return Err(Error::Degenerate("a feature has zero variance".into()));
    }
    let scale = 0.1 * var.iter().map(|v| v.sqrt()).sum::<f64>() / p as f64;
    let normal = Normal::new(0.0, scale).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(PldaParams {
        mean,
        speaker_loading: DMatrix::from_fn(p, dim_speaker, |_, _| normal.sample(rng)),
        channel_loading: DMatrix::from_fn(p, dim_channel, |_, _| normal.sample(rng)),
        residual: var,
    })
}

/// Training output with the log-likelihood before EM and after each
/// iteration.
#[derive(Debug, Clone)]
pub struct PldaFit {
    pub params: PldaParams,
    pub log_likelihoods: Vec<f64>,
}

fn check_trainable(speakers: &[SpeakerData]) -> Result<()> {
    let repeated = speakers.iter().filter(|d| d.len() >= 2).count();
    if speakers.len() < 2 || repeated < 2 {
        return Err(Error::Degenerate(
            "PLDA training needs at least 2 speakers with at least 2 vectors".into(),
        ));
    }
    Ok(())
}

pub fn plda_train_speakers(
    speakers: &[SpeakerData],
    dim_speaker: usize,
    dim_channel: usize,
    em_iters: usize,
    seed: u64,
) -> Result<PldaFit> {
    check_trainable(speakers)?;
    let mut params = init_params(speakers, dim_speaker, dim_channel, &mut rng::seeded(seed))?;
    let mut log_likelihoods = vec![log_likelihood(&params, speakers)?];
    for _ in 0..em_iters {
        params = em_step(&params, speakers)?;
        log_likelihoods.push(log_likelihood(&params, speakers)?);
    }
    Ok(PldaFit {
        params,
        log_likelihoods,
    })
}

pub fn plda_train(
    corpus: &IVectorCorpus,
    dim_speaker: usize,
    dim_channel: usize,
    em_iters: usize,
    seed: u64,
) -> Result<PldaParams> {
    let speakers: Vec<SpeakerData> = corpus.speaker_data()?.into_iter().map(|(_, d)| d).collect();
    Ok(plda_train_speakers(&speakers, dim_speaker, dim_channel, em_iters, seed)?.params)
}

pub fn plda_score(params: &PldaParams, enrollment: &[DVector<f64>], test: &DVector<f64>) -> Result<f64> {
    params.prepare()?.score(enrollment, test)
}

const MAGIC: &[u8; 4] = b"PLDA";
const VERSION: u32 = 1;

/// `PLDA`, u32 version, u32 p, q_s, q_c, then mu, V (row-major), U
/// (row-major) and the residual diagonal as little-endian f64.
pub fn write_plda<W: Write>(params: &PldaParams, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    for d in [params.dim(), params.dim_speaker(), params.dim_channel()] {
        w.write_u32::<LittleEndian>(d as u32)?;
    }
    write_f64s(&mut w, params.mean.iter())?;
    write_f64s(&mut w, params.speaker_loading.transpose().iter())?;
    write_f64s(&mut w, params.channel_loading.transpose().iter())?;
    write_f64s(&mut w, params.residual.iter())?;
    Ok(())
}

pub fn read_plda<R: Read>(mut r: R) -> Result<PldaParams> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("missing PLDA magic".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported PLDA version {version}")));
    }
    let p = r.read_u32::<LittleEndian>()? as usize;
    let qs = r.read_u32::<LittleEndian>()? as usize;
    let qc = r.read_u32::<LittleEndian>()? as usize;
    let params = PldaParams {
        mean: DVector::from_vec(read_f64s(&mut r, p)?),
        speaker_loading: DMatrix::from_row_slice(p, qs, &read_f64s(&mut r, p * qs)?),
        channel_loading: DMatrix::from_row_slice(p, qc, &read_f64s(&mut r, p * qc)?),
        residual: DVector::from_vec(read_f64s(&mut r, p)?),
    };
    params.validate()?;
    Ok(params)
}
