//! Corpus diagnostics and window-aware augmentation for noisy NER data.
//!
//! The crate is organised bottom-up:
//!
//! * [`corpus`] parses and writes BIO-labelled CoNLL files and derives entity spans.
//! * [`metrics`] computes the six structural features of a corpus and span-level scores.
//! * [`resample`] builds entity-rate families and stratified subsets for experiments.
//! * [`gsa`] relates features to model scores: correlation, Morris screening, Sobol indices.
//! * [`asa`] measures how sharp attention distributions are via their power spectrum.
//! * [`wom`] finds information-barren sentence windows and densifies them with
//!   entity-preserving back-translation.
//!
//! All randomness flows from a single seed through [`rng::stream`].

pub mod asa;
pub mod corpus;
pub mod gsa;
pub mod metrics;
pub mod resample;
pub mod rng;
pub mod wom;

pub use asa::{AsaConfig, AttentionTensor};
pub use corpus::{Corpus, EntitySpan, Label, RepairPolicy, Sentence, Token};
pub use gsa::{ExperimentRecord, MorrisResult, SobolResult};
pub use metrics::{Feature, FeatureConfig, FeatureVector, ScoreReport};
pub use resample::{SubsetManifest, SubsetSpec};
pub use wom::{AugmentationResult, TranslationBackend, WomConfig, WomReport};
