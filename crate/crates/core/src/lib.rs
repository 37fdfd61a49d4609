//! Speaker subspace modelling with a Gaussian-Binary Restricted Boltzmann
//! Machine whose hidden layer is split into a speaker factor shared by all
//! vectors of one speaker and per-vector channel factors.
//!
//! The crate covers the whole verification pipeline:
//!
//! * [`data`]: i-vector corpora, file formats, duration filtering,
//!   count-based partitioning, whitening and unit-sphere projection.
//! * [`grbm`]: model parameters, energies, factorized posteriors, exact
//!   marginal likelihood and partition function (small dimensions), samplers.
//! * [`train`]: maximum-likelihood training with analytic positive phase and
//!   m-step contrastive divergence for the negative phase.
//! * [`plda`]: two-subspace Gaussian PLDA trained by EM.
//! * [`scoring`]: LLR, cosine, normalized cosine, PLDA on projected vectors
//!   and linear score fusion.
//! * [`eval`]: trial lists, EER, minDCF and DET export.
//! * [`synth`]: synthetic corpora drawn from a ground-truth model.

pub mod data;
pub mod error;
pub mod eval;
pub mod grbm;
pub mod numeric;
pub mod plda;
pub mod rng;
pub mod scoring;
pub mod synth;
pub mod train;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
