//! Trial scoring: GRBM log-likelihood ratio, cosine and normalized cosine on
//! F-projected vectors, PLDA (raw or projected) and linear fusion.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Read, Write};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::data::IVectorCorpus;
use crate::grbm::{ExactModel, GrbmParams, LogPartition, SpeakerData};
use crate::numeric::{sigmoid, softplus};
use crate::plda::{PldaParams, PreparedPlda};
use crate::{eval, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Target,
    Nontarget,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Target => "target",
            Label::Nontarget => "nontarget",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "target" => Some(Label::Target),
            "nontarget" => Some(Label::Nontarget),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub model_speaker_id: String,
    pub enrollment_ids: Vec<String>,
    pub test_vector_id: String,
    pub label: Option<Label>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreEntry {
    pub model_speaker_id: String,
    pub test_vector_id: String,
    pub score: f64,
    pub label: Option<Label>,
}

/// Scores in trial order with `key=value` provenance metadata.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreFile {
    pub metadata: Vec<(String, String)>,
    pub entries: Vec<ScoreEntry>,
}

impl ScoreFile {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn scores(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.score).collect()
    }

    pub fn is_labeled(&self) -> bool {
        self.entries.iter().all(|e| e.label.is_some())
    }

    /// One `# key=value ...` comment line, a header, then
    /// `model_speaker_id,test_vector_id,score[,label]` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        if !self.metadata.is_empty() {
            let meta: Vec<String> = self.metadata.iter().map(|(k, v)| format!("{k}={v}")).collect();
            writeln!(w, "# {}", meta.join(" "))?;
        }
        let labeled = self.entries.iter().any(|e| e.label.is_some());
        let mut csv = csv::Writer::from_writer(w);
        if labeled {
            csv.write_record(["model_speaker_id", "test_vector_id", "score", "label"])?;
        } else {
            csv.write_record(["model_speaker_id", "test_vector_id", "score"])?;
        }
        for e in &self.entries {
            let score = format!("{:?}", e.score);
            if labeled {
                let label = e.label.map(Label::as_str).unwrap_or("");
                csv.write_record([&e.model_speaker_id, &e.test_vector_id, &score, label])?;
            } else {
                csv.write_record([&e.model_speaker_id, &e.test_vector_id, &score])?;
            }
        }
        csv.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<ScoreFile> {
        let mut text = String::new();
        BufReader::new(r).read_to_string(&mut text)?;
        let mut metadata = Vec::new();
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            for token in line[1..].split_whitespace() {
                if let Some((k, v)) = token.split_once('=') {
                    metadata.push((k.to_string(), v.to_string()));
                }
            }
        }
        let mut csv = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut entries = Vec::new();
        for rec in csv.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let err = |message: String| Error::Parse { line, message };
            if rec.len() < 3 || rec.len() > 4 {
                return Err(err(format!("expected 3 or 4 fields, found {}", rec.len())));
            }
            let score: f64 = rec[2].parse().map_err(|_| err(format!("bad score `{}`", &rec[2])))?;
            if !score.is_finite() {
                return Err(err("non-finite score".into()));
            }
            let label = match rec.get(3) {
                None | Some("") => None,
                Some(s) => Some(Label::parse(s).ok_or_else(|| err(format!("bad label `{s}`")))?),
            };
            entries.push(ScoreEntry {
                model_speaker_id: rec[0].to_string(),
                test_vector_id: rec[1].to_string(),
                score,
                label,
            });
        }
        Ok(ScoreFile { metadata, entries })
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<ScoreFile> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

/// Hex SHA-256 of serialized model bytes.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `log Z_N`, `log Z_1` and `log Z_{N+1}` for one enrollment size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogZTriplet {
    pub enroll: LogPartition,
    pub single: LogPartition,
    pub joint: LogPartition,
}

impl LogZTriplet {
    pub fn exact(model: &ExactModel, n: usize) -> Self {
        Self {
            enroll: model.log_partition(n),
            single: model.log_partition(1),
            joint: model.log_partition(n + 1),
        }
    }

    fn correction(&self, n: usize) -> Result<f64> {
        let orders = [self.enroll.n_order, self.single.n_order, self.joint.n_order];
        if orders != [n, 1, n + 1] {
            return Err(Error::InvalidArgument(format!(
                "partition orders {orders:?} do not fit an enrollment of {n}"
            )));
        }
        Ok(self.enroll.log_z + self.single.log_z - self.joint.log_z)
    }
}

fn softplus_sum(a: &DVector<f64>) -> f64 {
    a.iter().map(|&v| softplus(v)).sum()
}

/// `log P_{N+1}(X, x_t) − log P_N(X) − log P_1(x_t)`. Without the partition
/// triplet the result is shifted by a constant that depends only on `N`.
pub fn score_llr(
    params: &GrbmParams,
    enrollment: &SpeakerData,
    test: &DVector<f64>,
    log_z: Option<&LogZTriplet>,
) -> Result<f64> {
    params.check_visible(test, "test vector")?;
    let n = enrollment.len();
    let act_enroll = params.speaker_activation(enrollment)?;
    let act_test = params.speaker_activation_from_sum(test, 1);
    let act_joint = params.speaker_activation_from_sum(&(enrollment.sum() + test), n + 1);
    let mut score = softplus_sum(&act_joint) - softplus_sum(&act_enroll) - softplus_sum(&act_test);
    if let Some(t) = log_z {
        score += t.correction(n)?;
    }
    Ok(score)
}

/// `Fᵀx / ‖Fᵀx‖`.
pub fn project_f(params: &GrbmParams, x: &DVector<f64>) -> Result<DVector<f64>> {
    params.check_visible(x, "projected vector")?;
    let y = params.speaker_loading.tr_mul(x);
    let norm = y.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroNorm("F-projection".into()));
    }
    Ok(y / norm)
}

const UNIT_TOLERANCE: f64 = 1e-9;

fn check_unit(y: &DVector<f64>) -> Result<()> {
    if (y.norm() - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::InvalidArgument(format!(
            "cosine scoring expects unit vectors, got norm {}",
            y.norm()
        )));
    }
    Ok(())
}

/// Mean of the enrollment vectors.
fn enrollment_mean(y_enroll: &[DVector<f64>], y_test: &DVector<f64>) -> Result<DVector<f64>> {
    if y_enroll.is_empty() {
        return Err(Error::InvalidArgument("enrollment set is empty".into()));
    }
    for y in y_enroll.iter().chain(std::iter::once(y_test)) {
        if y.len() != y_test.len() {
            return Err(Error::DimensionMismatch {
                context: "cosine scoring".into(),
                expected: y_test.len(),
                found: y.len(),
            });
        }
        check_unit(y)?;
    }
    let sum = y_enroll.iter().fold(DVector::zeros(y_test.len()), |acc, y| acc + y);
    Ok(sum / y_enroll.len() as f64)
}

/// Returns `(l_cos, ‖y_sp‖)`. A single enrollment vector is already unit
/// length, so its norm is taken as exactly 1.
fn cosine_parts(y_sp: &DVector<f64>, n: usize, y_test: &DVector<f64>) -> Result<(f64, f64)> {
    let norm = if n == 1 { 1.0 } else { y_sp.norm() };
    if norm == 0.0 {
        return Err(Error::ZeroNorm("mean enrollment vector".into()));
    }
    Ok((y_test.dot(y_sp) / norm, norm))
}

/// Cosine between the test vector and the mean enrollment vector.
pub fn score_cosine(y_enroll: &[DVector<f64>], y_test: &DVector<f64>) -> Result<f64> {
    Ok(cosine_parts(&enrollment_mean(y_enroll, y_test)?, y_enroll.len(), y_test)?.0)
}

/// Cosine divided by `‖y_sp‖`, which equals the mean cosine between the
/// enrollment vectors and their normalized average.
pub fn score_cosine_normalized(y_enroll: &[DVector<f64>], y_test: &DVector<f64>) -> Result<f64> {
    let (cos, norm) = cosine_parts(&enrollment_mean(y_enroll, y_test)?, y_enroll.len(), y_test)?;
    Ok(cos / norm)
}

/// PLDA score of F-projected, unit-normalized vectors.
pub fn score_plda_projected(
    grbm: &GrbmParams,
    plda: &PldaParams,
    enrollment: &[DVector<f64>],
    test: &DVector<f64>,
) -> Result<f64> {
    let enroll = enrollment
        .iter()
        .map(|x| project_f(grbm, x))
        .collect::<Result<Vec<_>>>()?;
    crate::plda::plda_score(plda, &enroll, &project_f(grbm, test)?)
}

#[derive(Debug, Clone, Copy)]
pub enum Scorer<'a> {
    /// GRBM log-likelihood ratio, optionally with the exact partition terms.
    Llr { params: &'a GrbmParams, exact_z: bool },
    Cosine(&'a GrbmParams),
    CosineNormalized(&'a GrbmParams),
    Plda(&'a PldaParams),
    PldaProjected { grbm: &'a GrbmParams, plda: &'a PldaParams },
}

impl Scorer<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Scorer::Llr { .. } => "llr",
            Scorer::Cosine(_) => "cos",
            Scorer::CosineNormalized(_) => "cosnorm",
            Scorer::Plda(_) => "plda",
            Scorer::PldaProjected { .. } => "plda-fproj",
        }
    }
}

/// Looks up each vector id of the trials in its corpus.
struct Lookup<'c> {
    model: HashMap<&'c str, &'c DVector<f64>>,
    test: HashMap<&'c str, &'c DVector<f64>>,
}

impl<'c> Lookup<'c> {
    fn new(model: &'c IVectorCorpus, test: &'c IVectorCorpus) -> Self {
        let index = |c: &'c IVectorCorpus| {
            c.records()
                .iter()
                .map(|r| (r.vector_id.as_str(), &r.values))
                .collect::<HashMap<_, _>>()
        };
        Self {
            model: index(model),
            test: index(test),
        }
    }

    fn enrollment(&self, trial: &Trial) -> Result<Vec<DVector<f64>>> {
        if trial.enrollment_ids.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "model `{}` has no enrollment vectors",
                trial.model_speaker_id
            )));
        }
        trial
            .enrollment_ids
            .iter()
            .map(|id| {
                self.model
                    .get(id.as_str())
                    .map(|v| (*v).clone())
                    .ok_or_else(|| Error::TrialMismatch(format!("unknown enrollment vector `{id}`")))
            })
            .collect()
    }

    fn test(&self, trial: &Trial) -> Result<&'c DVector<f64>> {
        self.test
            .get(trial.test_vector_id.as_str())
            .copied()
            .ok_or_else(|| Error::TrialMismatch(format!("unknown test vector `{}`", trial.test_vector_id)))
    }
}

/// Enrollment-side summary reused by every trial of one model.
enum ModelSide {
    Llr { n: usize, sum: DVector<f64>, base: f64 },
    Cosine { n: usize, mean: DVector<f64> },
    Plda { n: usize, stat: DVector<f64>, base: f64 },
}

enum TestSide {
    Llr { x: DVector<f64>, base: f64 },
    Cosine { y: DVector<f64> },
    Plda { stat: DVector<f64>, base: f64 },
}

/// Checks that every model has the same enrollment size; the partition
/// terms of the LLR only cancel in that case.
pub fn check_uniform_enrollment(trials: &[Trial]) -> Result<()> {
    let sizes: BTreeSet<usize> = trials.iter().map(|t| t.enrollment_ids.len()).collect();
    if sizes.len() > 1 {
        return Err(Error::MixedEnrollmentSizes(sizes.into_iter().collect()));
    }
    Ok(())
}

/// Scores trials whose enrollment and test ids refer to the given corpora.
/// Output order follows the trial order.
pub fn score_trials(
    scorer: &Scorer<'_>,
    trials: &[Trial],
    model: &IVectorCorpus,
    test: &IVectorCorpus,
) -> Result<Vec<f64>> {
    let lookup = Lookup::new(model, test);
    let exact = match scorer {
        Scorer::Llr { params, exact_z: true } => Some(ExactModel::new(params)?),
        Scorer::Llr { exact_z: false, .. } => {
            check_uniform_enrollment(trials)?;
            None
        }
        _ => None,
    };
    let prepared = match scorer {
        Scorer::Plda(p) | Scorer::PldaProjected { plda: p, .. } => Some(p.prepare()?),
        _ => None,
    };

    // Distinct models and test vectors in first-appearance order.
    let mut model_index: HashMap<&str, usize> = HashMap::new();
    let mut model_trials: Vec<&Trial> = Vec::new();
    let mut test_index: HashMap<&str, usize> = HashMap::new();
    let mut test_ids: Vec<&Trial> = Vec::new();
    for t in trials {
        model_index.entry(t.model_speaker_id.as_str()).or_insert_with(|| {
            model_trials.push(t);
            model_trials.len() - 1
        });
        test_index.entry(t.test_vector_id.as_str()).or_insert_with(|| {
            test_ids.push(t);
            test_ids.len() - 1
        });
    }

    let models = model_trials
        .par_iter()
        .map(|t| {
            let enroll = lookup.enrollment(t)?;
            Ok((enroll.len(), model_side(scorer, prepared.as_ref(), &enroll)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let tests = test_ids
        .par_iter()
        .map(|t| test_side(scorer, prepared.as_ref(), lookup.test(t)?))
        .collect::<Result<Vec<_>>>()?;

    let mut triplets: HashMap<usize, LogZTriplet> = HashMap::new();
    if let Some(exact) = &exact {
        for (n, _) in &models {
            triplets.entry(*n).or_insert_with(|| LogZTriplet::exact(exact, *n));
        }
    }

    trials
        .par_iter()
        .map(|t| {
            let (n, m) = &models[model_index[t.model_speaker_id.as_str()]];
            if *n != t.enrollment_ids.len() {
                return Err(Error::TrialMismatch(format!(
                    "model `{}` appears with different enrollment sets",
                    t.model_speaker_id
                )));
            }
            let x = &tests[test_index[t.test_vector_id.as_str()]];
            combine(scorer, prepared.as_ref(), &triplets, m, x)
        })
        .collect()
}

fn model_side(scorer: &Scorer<'_>, plda: Option<&PreparedPlda<'_>>, enroll: &[DVector<f64>]) -> Result<ModelSide> {
    Ok(match scorer {
        Scorer::Llr { params, .. } => {
            let data = SpeakerData::new(enroll.to_vec())?;
            params.check_visible(data.sum(), "enrollment")?;
            let base = softplus_sum(&params.speaker_activation(&data)?);
            ModelSide::Llr {
                n: data.len(),
                sum: data.sum().clone(),
                base,
            }
        }
        Scorer::Cosine(g) | Scorer::CosineNormalized(g) => {
            let ys = enroll.iter().map(|x| project_f(g, x)).collect::<Result<Vec<_>>>()?;
            let mean = ys.iter().fold(DVector::zeros(g.dim_s()), |acc, y| acc + y) / ys.len() as f64;
            if mean.norm() == 0.0 {
                return Err(Error::ZeroNorm("mean enrollment vector".into()));
            }
            ModelSide::Cosine { n: ys.len(), mean }
        }
        Scorer::Plda(_) | Scorer::PldaProjected { .. } => {
            let plda = plda.expect("prepared PLDA");
            let mut sum = DVector::zeros(plda.params().dim());
            for x in enroll {
                let v = match scorer {
                    Scorer::PldaProjected { grbm, .. } => project_f(grbm, x)?,
                    _ => x.clone(),
                };
                sum += plda.center(&v)?;
            }
            let stat = plda.speaker_stat(&sum);
            let base = plda.coupling_from_stat(enroll.len(), &stat)?;
            ModelSide::Plda {
                n: enroll.len(),
                stat,
                base,
            }
        }
    })
}

fn test_side(scorer: &Scorer<'_>, plda: Option<&PreparedPlda<'_>>, x: &DVector<f64>) -> Result<TestSide> {
    Ok(match scorer {
        Scorer::Llr { params, .. } => {
            params.check_visible(x, "test vector")?;
            let base = softplus_sum(&params.speaker_activation_from_sum(x, 1));
            TestSide::Llr { x: x.clone(), base }
        }
        Scorer::Cosine(g) | Scorer::CosineNormalized(g) => TestSide::Cosine { y: project_f(g, x)? },
        Scorer::Plda(_) | Scorer::PldaProjected { .. } => {
            let plda = plda.expect("prepared PLDA");
            let v = match scorer {
                Scorer::PldaProjected { grbm, .. } => project_f(grbm, x)?,
                _ => x.clone(),
            };
            let stat = plda.speaker_stat(&plda.center(&v)?);
            let base = plda.coupling_from_stat(1, &stat)?;
            TestSide::Plda { stat, base }
        }
    })
}

fn combine(
    scorer: &Scorer<'_>,
    plda: Option<&PreparedPlda<'_>>,
    triplets: &HashMap<usize, LogZTriplet>,
    m: &ModelSide,
    t: &TestSide,
) -> Result<f64> {
    let score = match (scorer, m, t) {
        (Scorer::Llr { params, .. }, ModelSide::Llr { n, sum, base }, TestSide::Llr { x, base: tb }) => {
            let joint = params.speaker_activation_from_sum(&(sum + x), n + 1);
            let mut s = softplus_sum(&joint) - base - tb;
            if let Some(z) = triplets.get(n) {
                s += z.correction(*n)?;
            }
            s
        }
        (Scorer::Cosine(_), ModelSide::Cosine { n, mean }, TestSide::Cosine { y }) => cosine_parts(mean, *n, y)?.0,
        (Scorer::CosineNormalized(_), ModelSide::Cosine { n, mean }, TestSide::Cosine { y }) => {
            let (c, norm) = cosine_parts(mean, *n, y)?;
            c / norm
        }
        (_, ModelSide::Plda { n, stat, base }, TestSide::Plda { stat: ts, base: tb }) => {
            let plda = plda.expect("prepared PLDA");
            plda.coupling_from_stat(n + 1, &(stat + ts))? - base - tb
        }
        _ => unreachable!("model and test summaries come from the same scorer"),
    };
    if !score.is_finite() {
        return Err(Error::NonFinite("trial score".into()));
    }
    Ok(score)
}

/// Builds the full trial list of two corpora and scores it.
pub fn score_corpora(scorer: &Scorer<'_>, model: &IVectorCorpus, test: &IVectorCorpus) -> Result<ScoreFile> {
    let trials = eval::build_trials(model, test)?;
    let scores = score_trials(scorer, &trials, model, test)?;
    Ok(ScoreFile {
        metadata: vec![("scorer".into(), scorer.name().into())],
        entries: trials
            .into_iter()
            .zip(scores)
            .map(|(t, score)| ScoreEntry {
                model_speaker_id: t.model_speaker_id,
                test_vector_id: t.test_vector_id,
                score,
                label: t.label,
            })
            .collect(),
    })
}

/// Affine score combination: `Σ wᵢ sᵢ + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights {
    pub weights: Vec<f64>,
    pub offset: f64,
}

impl FusionWeights {
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for v in &self.weights {
            writeln!(w, "weight {v:?}")?;
        }
        writeln!(w, "offset {:?}", self.offset)?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<FusionWeights> {
        let mut weights = Vec::new();
        let mut offset = None;
        for (n, line) in BufReader::new(r).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: &str| Error::Parse {
                line: n + 1,
                message: m.to_string(),
            };
            let (key, value) = line.split_once(' ').ok_or_else(|| err("expected `key value`"))?;
            let v: f64 = value.trim().parse().map_err(|_| err("bad number"))?;
            match key {
                "weight" => weights.push(v),
                "offset" => offset = Some(v),
                _ => return Err(err("unknown key")),
            }
        }
        Ok(FusionWeights {
            weights,
            offset: offset.ok_or_else(|| Error::Format("fusion file without offset".into()))?,
        })
    }

    pub fn apply_one(&self, scores: &[f64]) -> f64 {
        self.weights.iter().zip(scores).map(|(w, s)| w * s).sum::<f64>() + self.offset
    }
}

/// Checks that all files list the same trials in the same order.
fn check_aligned(files: &[ScoreFile]) -> Result<()> {
    let first = files
        .first()
        .ok_or_else(|| Error::InvalidArgument("no score files given".into()))?;
    for (k, f) in files.iter().enumerate().skip(1) {
        if f.entries.len() != first.entries.len() {
            return Err(Error::TrialMismatch(format!(
                "system {k} has {} trials, system 0 has {}",
                f.entries.len(),
                first.entries.len()
            )));
        }
        for (i, (a, b)) in first.entries.iter().zip(&f.entries).enumerate() {
            if a.model_speaker_id != b.model_speaker_id || a.test_vector_id != b.test_vector_id {
                return Err(Error::TrialMismatch(format!(
                    "trial {i} differs between system 0 and system {k}"
                )));
            }
        }
    }
    Ok(())
}

/// Per-trial score rows and target flags of aligned files. Every file must
/// carry labels, and they must agree.
fn fusion_design(files: &[ScoreFile]) -> Result<(Vec<Vec<f64>>, Vec<bool>)> {
    check_aligned(files)?;
    let first = &files[0];
    let mut labels = Vec::with_capacity(first.entries.len());
    for (i, e) in first.entries.iter().enumerate() {
        let mut label = None;
        for (k, f) in files.iter().enumerate() {
            let l = f.entries[i].label.ok_or_else(|| {
                Error::MissingLabels(format!(
                    "system {k}: trial ({}, {}) has no label",
                    e.model_speaker_id, e.test_vector_id
                ))
            })?;
            if label.is_some_and(|prev| prev != l) {
                return Err(Error::TrialMismatch(format!(
                    "trial ({}, {}) is labeled differently across systems",
                    e.model_speaker_id, e.test_vector_id
                )));
            }
            label = Some(l);
        }
        labels.push(label == Some(Label::Target));
    }
    let rows = (0..first.entries.len())
        .map(|i| files.iter().map(|f| f.entries[i].score).collect())
        .collect();
    Ok((rows, labels))
}

/// `½ mean_targets softplus(−l) + ½ mean_nontargets softplus(l)` for the
/// fused scores `l`; targets and nontargets carry equal total weight.
pub fn weighted_logistic_objective(fused: &[f64], is_target: &[bool]) -> Result<f64> {
    let nt = is_target.iter().filter(|&&t| t).count();
    let nn = is_target.len() - nt;
    if nt == 0 || nn == 0 {
        return Err(Error::SingleClass);
    }
    let (mut t, mut n) = (0.0, 0.0);
    for (&l, &target) in fused.iter().zip(is_target) {
        if target {
            t += softplus(-l);
        } else {
            n += softplus(l);
        }
    }
    Ok(0.5 * t / nt as f64 + 0.5 * n / nn as f64)
}

pub const FUSION_MAX_ITERS: usize = 500;

/// Minimizes the weighted logistic objective over affine combinations of
/// the score columns by damped Newton steps from zero.
pub fn fit_logistic(rows: &[Vec<f64>], is_target: &[bool]) -> Result<FusionWeights> {
    let k = rows.first().map_or(0, Vec::len);
    if rows.len() != is_target.len() || rows.iter().any(|r| r.len() != k) {
        return Err(Error::InvalidArgument("ragged fusion design".into()));
    }
    let nt = is_target.iter().filter(|&&t| t).count();
    let nn = is_target.len() - nt;
    if nt == 0 || nn == 0 {
        return Err(Error::SingleClass);
    }
    let (wt, wn) = (0.5 / nt as f64, 0.5 / nn as f64);
    let dim = k + 1;
    let features = |r: &Vec<f64>| DVector::from_iterator(dim, r.iter().copied().chain(std::iter::once(1.0)));
    let xs: Vec<DVector<f64>> = rows.iter().map(features).collect();
    let objective = |theta: &DVector<f64>| -> f64 {
        xs.iter()
            .zip(is_target)
            .map(|(x, &t)| {
                let l = theta.dot(x);
                if t { wt * softplus(-l) } else { wn * softplus(l) }
            })
            .sum()
    };

    let mut theta = DVector::zeros(dim);
    let mut value = objective(&theta);
    for _ in 0..FUSION_MAX_ITERS {
        let mut grad = DVector::zeros(dim);
        let mut hess = DMatrix::zeros(dim, dim);
        for (x, &t) in xs.iter().zip(is_target) {
            let l = theta.dot(x);
            let (w, d1) = if t { (wt, -sigmoid(-l)) } else { (wn, sigmoid(l)) };
            let d2 = sigmoid(l) * sigmoid(-l);
            grad.axpy(w * d1, x, 1.0);
            hess.ger(w * d2, x, x, 1.0);
        }
        if grad.amax() < 1e-14 {
            break;
        }
        let scale = hess.diagonal().amax().max(1e-300);
        let mut damping = 1e-12 * scale;
        let step = loop {
            let mut h = hess.clone();
            for i in 0..dim {
                h[(i, i)] += damping;
            }
            if let Some(chol) = h.cholesky() {
                break -chol.solve(&grad);
            }
            damping *= 10.0;
            if damping > 1e10 * scale {
                break -&grad;
            }
        };
        // backtracking on the objective
        let slope = grad.dot(&step);
        let mut alpha = 1.0;
        let mut improved = false;
        while alpha > 1e-12 {
            let cand = &theta + &step * alpha;
            let v = objective(&cand);
            if v <= value + 1e-4 * alpha * slope {
                improved = v < value;
                theta = cand;
                value = v;
                break;
            }
            alpha *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok(FusionWeights {
        weights: theta.rows(0, k).iter().copied().collect(),
        offset: theta[k],
    })
}

/// Fits fusion weights on labeled cross-validation scores of two or more
/// systems. The optimizer is deterministic, so no seed is involved.
pub fn fuse_train(files: &[ScoreFile]) -> Result<FusionWeights> {
    if files.len() < 2 {
        return Err(Error::InvalidArgument("fusion needs at least two systems".into()));
    }
    let (rows, labels) = fusion_design(files)?;
    fit_logistic(&rows, &labels)
}

/// Objective of given weights on labeled score files.
pub fn fusion_objective(weights: &FusionWeights, files: &[ScoreFile]) -> Result<f64> {
    let (rows, labels) = fusion_design(files)?;
    let fused: Vec<f64> = rows.iter().map(|r| weights.apply_one(r)).collect();
    weighted_logistic_objective(&fused, &labels)
}

pub fn fuse_apply(weights: &FusionWeights, files: &[ScoreFile]) -> Result<ScoreFile> {
    check_aligned(files)?;
    if weights.weights.len() != files.len() {
        return Err(Error::DimensionMismatch {
            context: "fusion weights per system".into(),
            expected: files.len(),
            found: weights.weights.len(),
        });
    }
    let entries = (0..files[0].entries.len())
        .map(|i| {
            let scores: Vec<f64> = files.iter().map(|f| f.entries[i].score).collect();
            let e = &files[0].entries[i];
            ScoreEntry {
                model_speaker_id: e.model_speaker_id.clone(),
                test_vector_id: e.test_vector_id.clone(),
                score: weights.apply_one(&scores),
                label: files.iter().find_map(|f| f.entries[i].label),
            }
        })
        .collect();
    Ok(ScoreFile {
        metadata: vec![("scorer".into(), "fusion".into())],
        entries,
    })
}
