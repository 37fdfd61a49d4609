//! Trial lists and detection metrics.
//!
//! A trial is accepted iff its score is at least the threshold. The sweep
//! visits `−∞`, the midpoints between adjacent distinct scores and `+∞`, so a
//! list with `k` distinct scores yields `k + 1` operating points.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::data::IVectorCorpus;
use crate::scoring::{Label, ScoreFile, Trial};
use crate::{Error, Result};

pub const DEFAULT_FA_COST: f64 = 100.0;

/// Cross product of model speakers and test vectors. A trial is labeled when
/// the test vector carries a speaker id.
pub fn build_trials(model: &IVectorCorpus, test: &IVectorCorpus) -> Result<Vec<Trial>> {
    if model.is_empty() || test.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if !model.is_fully_labeled() {
        return Err(Error::MissingLabels("model corpus has unlabeled records".into()));
    }
    let mut trials = Vec::with_capacity(model.num_speakers() * test.len());
    for (speaker, idx) in model.speakers() {
        let enrollment: Vec<String> = idx
            .iter()
            .map(|&i| model.records()[i].vector_id.clone())
            .collect();
        for rec in test.records() {
            trials.push(Trial {
                model_speaker_id: speaker.to_string(),
                enrollment_ids: enrollment.clone(),
                test_vector_id: rec.vector_id.clone(),
                label: rec.speaker_id.as_ref().map(|s| {
                    if s == speaker {
                        Label::Target
                    } else {
                        Label::Nontarget
                    }
                }),
            });
        }
    }
    Ok(trials)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    /// Interpolated crossing of the FA and FR staircases.
    pub eer: f64,
    /// `min max(FA, FR)` over the swept thresholds.
    pub eer_discrete: f64,
    pub min_dcf: f64,
    pub dcf_threshold: f64,
    pub fa_cost: f64,
    pub n_target: usize,
    pub n_nontarget: usize,
    /// `(fa, fr)` in order of increasing threshold.
    pub det_points: Vec<(f64, f64)>,
    /// Threshold of each DET point.
    pub thresholds: Vec<f64>,
}

pub fn compute_metrics(scores: &[f64], is_target: &[bool], fa_cost: f64) -> Result<MetricReport> {
    if scores.len() != is_target.len() {
        return Err(Error::DimensionMismatch {
            context: "labels per score".into(),
            expected: scores.len(),
            found: is_target.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score of trial {i}")));
    }
    if !(fa_cost.is_finite() && fa_cost >= 0.0) {
        return Err(Error::InvalidArgument("fa_cost must be finite and non-negative".into()));
    }
    let n_target = is_target.iter().filter(|&&t| t).count();
    let n_nontarget = scores.len() - n_target;
    if n_target == 0 || n_nontarget == 0 {
        return Err(Error::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Start by accepting everything and reject one group of tied scores at a time.
    let (nt, nn) = (n_target as f64, n_nontarget as f64);
    let mut rejected_t = 0usize;
    let mut rejected_n = 0usize;
    let mut det_points = vec![(1.0, 0.0)];
    let mut thresholds = vec![f64::NEG_INFINITY];
    let mut i = 0;
    while i < order.len() {
        let value = scores[order[i]];
        while i < order.len() && scores[order[i]] == value {
            if is_target[order[i]] {
                rejected_t += 1;
            } else {
                rejected_n += 1;
            }
            i += 1;
        }
        let fa = (n_nontarget - rejected_n) as f64 / nn;
        let fr = rejected_t as f64 / nt;
        det_points.push((fa, fr));
        thresholds.push(match order.get(i) {
            Some(&next) => value + (scores[next] - value) / 2.0,
            None => f64::INFINITY,
        });
    }

    let mut min_dcf = f64::INFINITY;
    let mut dcf_threshold = f64::NEG_INFINITY;
    for (&(fa, fr), &th) in det_points.iter().zip(&thresholds) {
        let dcf = fr + fa_cost * fa;
        if dcf < min_dcf {
            min_dcf = dcf;
            dcf_threshold = th;
        }
    }

    let eer_discrete = det_points
        .iter()
        .map(|&(fa, fr)| fa.max(fr))
        .fold(f64::INFINITY, f64::min);
    let eer = interpolated_eer(&det_points);

    Ok(MetricReport {
        eer,
        eer_discrete,
        min_dcf,
        dcf_threshold,
        fa_cost,
        n_target,
        n_nontarget,
        det_points,
        thresholds,
    })
}

/// Linear interpolation where `fr − fa` changes sign.
fn interpolated_eer(points: &[(f64, f64)]) -> f64 {
    for w in points.windows(2) {
        let (fa0, fr0) = w[0];
        let (fa1, fr1) = w[1];
        let d0 = fr0 - fa0;
        let d1 = fr1 - fa1;
        if d0 == 0.0 {
            return fr0;
        }
        if d0 < 0.0 && d1 >= 0.0 {
            let t = -d0 / (d1 - d0);
            return fa0 + t * (fa1 - fa0);
        }
    }
    let &(fa, fr) = points.last().expect("at least two points");
    0.5 * (fa + fr)
}

/// Metrics of a labeled score file.
pub fn compute_metrics_file(scores: &ScoreFile, fa_cost: f64) -> Result<MetricReport> {
    let mut values = Vec::with_capacity(scores.entries.len());
    let mut labels = Vec::with_capacity(scores.entries.len());
    for e in &scores.entries {
        let label = e.label.ok_or_else(|| {
            Error::MissingLabels(format!(
                "trial ({}, {}) has no label",
                e.model_speaker_id, e.test_vector_id
            ))
        })?;
        values.push(e.score);
        labels.push(label == Label::Target);
    }
    compute_metrics(&values, &labels, fa_cost)
}

/// Flat `key value` lines.
pub fn write_metrics<W: Write>(report: &MetricReport, mut w: W) -> Result<()> {
    writeln!(w, "eer {:?}", report.eer)?;
    writeln!(w, "eer_discrete {:?}", report.eer_discrete)?;
    writeln!(w, "min_dcf {:?}", report.min_dcf)?;
    writeln!(w, "dcf_threshold {:?}", report.dcf_threshold)?;
    writeln!(w, "fa_cost {:?}", report.fa_cost)?;
    writeln!(w, "n_target {}", report.n_target)?;
    writeln!(w, "n_nontarget {}", report.n_nontarget)?;
    Ok(())
}

/// Parses a metrics file into `(key, value)` pairs.
pub fn read_metrics<R: Read>(r: R) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::new();
    for (n, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(k), Some(v), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Parse {
                line: n + 1,
                message: "expected `key value`".into(),
            });
        };
        let v: f64 = v.parse().map_err(|_| Error::Parse {
            line: n + 1,
            message: format!("bad number `{v}`"),
        })?;
        out.push((k.to_string(), v));
    }
    Ok(out)
}

/// DET staircase as CSV with header `fa,fr`.
pub fn write_det<W: Write>(report: &MetricReport, w: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["fa", "fr"])?;
    for &(fa, fr) in &report.det_points {
        csv.write_record([format!("{fa:?}"), format!("{fr:?}")])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn export_det(report: &MetricReport, path: impl AsRef<Path>) -> Result<()> {
    write_det(report, std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn read_det<R: Read>(r: R) -> Result<Vec<(f64, f64)>> {
    let mut csv = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (n, rec) in csv.records().enumerate() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse {
                    line: n + 2,
                    message: "expected two numbers".into(),
                })
        };
        out.push((parse(0)?, parse(1)?));
    }
    Ok(out)
}
