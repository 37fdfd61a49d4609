use super::{IVectorCorpus, IVectorRecord};
use crate::{Error, Result};

/// Inclusive range of per-speaker vector counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CountRange {
    pub lo: usize,
    pub hi: usize,
}

impl CountRange {
    pub fn new(lo: usize, hi: usize) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, n: usize) -> bool {
        (self.lo..=self.hi).contains(&n)
    }

    fn overlaps(&self, other: &CountRange) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

/// Count-based split of a labeled corpus into training, evaluation and
/// cross-validation sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionSpec {
    pub train_range: CountRange,
    pub eval_range: CountRange,
    /// Speakers with strictly more vectors than this go to cross-validation.
    pub cv_min: usize,
    /// Leading vectors (file order) of an evaluation speaker used for enrollment.
    pub enroll_per_speaker: usize,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        Self {
            train_range: CountRange::new(3, 10),
            eval_range: CountRange::new(11, 15),
            cv_min: 15,
            enroll_per_speaker: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partitions {
    pub train: IVectorCorpus,
    pub model: IVectorCorpus,
    pub test: IVectorCorpus,
    pub model_cv: IVectorCorpus,
    pub test_cv: IVectorCorpus,
}

impl PartitionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.enroll_per_speaker == 0 {
            return Err(Error::InvalidArgument("enroll_per_speaker must be at least 1".into()));
        }
        for (name, r) in [("train", self.train_range), ("eval", self.eval_range)] {
            if r.lo > r.hi {
                return Err(Error::InvalidArgument(format!("{name} range is empty")));
            }
        }
        if self.train_range.overlaps(&self.eval_range) {
            return Err(Error::OverlappingRanges(format!(
                "train {:?} and eval {:?}",
                self.train_range, self.eval_range
            )));
        }
        let cv_from = self.cv_min + 1;
        for (name, r) in [("train", self.train_range), ("eval", self.eval_range)] {
            if r.hi >= cv_from {
                return Err(Error::OverlappingRanges(format!(
                    "{name} {r:?} reaches the cross-validation counts (> {})",
                    self.cv_min
                )));
            }
        }
        Ok(())
    }

    /// Unlabeled records and speakers outside every range are dropped.
    pub fn apply(&self, corpus: &IVectorCorpus) -> Result<Partitions> {
        self.validate()?;
        let mut train = Vec::new();
        let mut model = Vec::new();
        let mut test = Vec::new();
        let mut model_cv = Vec::new();
        let mut test_cv = Vec::new();

        for (_, idx) in corpus.speakers() {
            let n = idx.len();
            let recs = idx.iter().map(|&i| corpus.records()[i].clone());
            let split = |recs: &mut dyn Iterator<Item = IVectorRecord>,
                         enroll: &mut Vec<IVectorRecord>,
                         rest: &mut Vec<IVectorRecord>| {
                for (k, r) in recs.enumerate() {
                    if k < self.enroll_per_speaker {
                        enroll.push(r);
                    } else {
                        rest.push(r);
                    }
                }
            };
            if self.train_range.contains(n) {
                train.extend(recs);
            } else if self.eval_range.contains(n) {
                split(&mut { recs }, &mut model, &mut test);
            } else if n > self.cv_min {
                split(&mut { recs }, &mut model_cv, &mut test_cv);
            }
        }

        Ok(Partitions {
            train: corpus.with_records(train),
            model: corpus.with_records(model),
            test: corpus.with_records(test),
            model_cv: corpus.with_records(model_cv),
            test_cv: corpus.with_records(test_cv),
        })
    }
}
