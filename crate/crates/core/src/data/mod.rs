//! i-vector corpora: records, speaker grouping, file formats and
//! preprocessing transforms.

mod io;
mod partition;
mod transform;

pub use io::{load_corpus, read_binary, read_csv, save_corpus, write_binary, write_csv, Format};
pub use partition::{CountRange, PartitionSpec, Partitions};
pub use transform::WhiteningTransform;

use indexmap::IndexMap;
use nalgebra::DVector;

use crate::grbm::SpeakerData;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct IVectorRecord {
    pub vector_id: String,
    /// `None` for unlabeled records.
    pub speaker_id: Option<String>,
    pub duration_seconds: f64,
    pub values: DVector<f64>,
}

/// Records sharing one dimension, indexed by speaker in order of first
/// appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct IVectorCorpus {
    dim: usize,
    records: Vec<IVectorRecord>,
    speakers: IndexMap<String, Vec<usize>>,
}

impl IVectorCorpus {
    /// Validates dimensions, finiteness and id uniqueness. An empty record
    /// list is a valid corpus.
    pub fn new(dim: usize, records: Vec<IVectorRecord>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("corpus dimension must be positive".into()));
        }
        let mut seen = std::collections::HashSet::with_capacity(records.len());
        let mut speakers: IndexMap<String, Vec<usize>> = IndexMap::new();
        for (i, r) in records.iter().enumerate() {
            if r.values.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: format!("record `{}`", r.vector_id),
                    expected: dim,
                    found: r.values.len(),
                });
            }
            if !r.values.iter().all(|v| v.is_finite()) || !r.duration_seconds.is_finite() {
                return Err(Error::NonFinite(format!("record `{}`", r.vector_id)));
            }
            if r.duration_seconds < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "negative duration for record `{}`",
                    r.vector_id
                )));
            }
            if !seen.insert(r.vector_id.as_str()) {
                return Err(Error::DuplicateId(r.vector_id.clone()));
            }
            if let Some(spk) = &r.speaker_id {
                speakers.entry(spk.clone()).or_default().push(i);
            }
        }
        Ok(Self {
            dim,
            records,
            speakers,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn records(&self) -> &[IVectorRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn num_speakers(&self) -> usize {
        self.speakers.len()
    }

    /// Speaker ids with the indices of their records, in first-appearance order.
    pub fn speakers(&self) -> impl Iterator<Item = (&str, &[usize])> {
        self.speakers.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn speaker_records(&self, speaker_id: &str) -> Option<Vec<&IVectorRecord>> {
        self.speakers
            .get(speaker_id)
            .map(|idx| idx.iter().map(|&i| &self.records[i]).collect())
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.records.iter().all(|r| r.speaker_id.is_some())
    }

    pub fn into_records(self) -> Vec<IVectorRecord> {
        self.records
    }

    /// Builds a corpus of the same dimension from a subset of records.
    pub(crate) fn with_records(&self, records: Vec<IVectorRecord>) -> Self {
        Self::new(self.dim, records).expect("subset of a valid corpus is valid")
    }

    /// Per-speaker data sets for training and enrollment. Fails when any record
    /// is unlabeled.
    pub fn speaker_data(&self) -> Result<Vec<(String, SpeakerData)>> {
        if let Some(r) = self.records.iter().find(|r| r.speaker_id.is_none()) {
            return Err(Error::MissingLabels(format!(
                "record `{}` has no speaker id",
                r.vector_id
            )));
        }
        self.speakers
            .iter()
            .map(|(spk, idx)| {
                let vectors = idx.iter().map(|&i| self.records[i].values.clone()).collect();
                Ok((spk.clone(), SpeakerData::new(vectors)?))
            })
            .collect()
    }

    /// Drops records shorter than `min_seconds` (strictly below). Speakers left
    /// without records disappear from the index.
    pub fn filter_by_duration(&self, min_seconds: f64) -> IVectorCorpus {
        let kept = self
            .records
            .iter()
            .filter(|r| r.duration_seconds >= min_seconds)
            .cloned()
            .collect();
        self.with_records(kept)
    }

    /// Maps every record's values through `f`, keeping ids and labels.
    pub fn map_values<F>(&self, mut f: F) -> Result<IVectorCorpus>
    where
        F: FnMut(&IVectorRecord) -> Result<DVector<f64>>,
    {
        let mut dim = None;
        let mut out = Vec::with_capacity(self.records.len());
        for r in &self.records {
            let values = f(r)?;
            dim.get_or_insert(values.len());
            out.push(IVectorRecord {
                values,
                ..r.clone()
            });
        }
        IVectorCorpus::new(dim.unwrap_or(self.dim), out)
    }

    /// Scales every record to unit Euclidean norm.
    pub fn unit_sphere_project(&self) -> Result<IVectorCorpus> {
        self.map_values(|r| {
            let n = r.values.norm();
            if n == 0.0 {
                return Err(Error::ZeroNorm(r.vector_id.clone()));
            }
            Ok(&r.values / n)
        })
    }
}
