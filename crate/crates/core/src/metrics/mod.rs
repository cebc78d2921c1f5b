//! Structural features of a corpus (or any slice of its sentences) and
//! span-level precision / recall / F1.
//!
//! Every function here is a pure function of its inputs. Sums over sentences
//! are integer counts, and floating-point sums iterate ordered maps, so results
//! do not depend on sentence order or thread scheduling.

mod score;
pub mod wordpiece;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Label, Sentence, Token};

pub use score::{o_label_proportion, score_spans, ScoreReport, SCORE_CSV_HEADER};
pub use wordpiece::{heuristic_piece_count, Segmenter, WordPieceVocab};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no sentences to measure")]
    Empty,
    #[error("sentence {sentence}: {message}")]
    ShapeMismatch { sentence: usize, message: String },
    #[error("cannot read WordPiece vocabulary {path}: {source}")]
    Vocab {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid feature configuration: {0}")]
    Config(String),
}

/// Which correction term the density formula uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NedVariant {
    /// `(ET/TT) * (1 + log(TT_SL) * lambda)`
    #[default]
    Eq1,
    /// `(ET/TT) * (1 + log(TT/TT_SL) * lambda)`
    RatioLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogBase {
    #[default]
    Natural,
    Base2,
}

impl LogBase {
    fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Natural => x.ln(),
            LogBase::Base2 => x.log2(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// Text structure factor of the density correction term.
    pub lambda: f64,
    pub ned_variant: NedVariant,
    pub log_base: LogBase,
    /// BERT-style `vocab.txt`; without it SSR uses the heuristic splitter.
    pub wordpiece_vocab_path: Option<String>,
    /// Entity identity for polysemy: exact surface instead of case-folded.
    pub ele_case_sensitive: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            lambda: 0.1,
            ned_variant: NedVariant::Eq1,
            log_base: LogBase::Natural,
            wordpiece_vocab_path: None,
            ele_case_sensitive: false,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(MetricsError::Config(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        Ok(())
    }

    pub fn segmenter(&self) -> Result<Segmenter, MetricsError> {
        match &self.wordpiece_vocab_path {
            Some(path) => WordPieceVocab::from_file(path)
                .map(Segmenter::WordPiece)
                .map_err(|source| MetricsError::Vocab { path: path.clone(), source }),
            None => Ok(Segmenter::Heuristic),
        }
    }
}

/// The six structural features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Ned,
    NormStd,
    Redundancy,
    Ele,
    Ssr,
    VocabEntropy,
}

impl Feature {
    pub const ALL: [Feature; 6] = [
        Feature::Ned,
        Feature::NormStd,
        Feature::Redundancy,
        Feature::Ele,
        Feature::Ssr,
        Feature::VocabEntropy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Ned => "ned",
            Feature::NormStd => "norm_std",
            Feature::Redundancy => "redundancy",
            Feature::Ele => "ele",
            Feature::Ssr => "ssr",
            Feature::VocabEntropy => "vocab_entropy",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Feature::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown feature {s:?} (expected one of ned, norm_std, redundancy, ele, ssr, vocab_entropy)"))
    }
}

/// CSV column order for [`FeatureVector`].
pub const FEATURE_CSV_HEADER: &str = "ned,norm_std,redundancy,ele,ssr,vocab_entropy";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub ned: f64,
    pub norm_std: f64,
    pub redundancy: f64,
    pub ele: f64,
    pub ssr: f64,
    pub vocab_entropy: f64,
}

impl FeatureVector {
    pub fn get(&self, feature: Feature) -> f64 {
        self.to_array()[feature.index()]
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.ned, self.norm_std, self.redundancy, self.ele, self.ssr, self.vocab_entropy]
    }

    pub fn from_array(values: [f64; 6]) -> Self {
        FeatureVector {
            ned: values[0],
            norm_std: values[1],
            redundancy: values[2],
            ele: values[3],
            ssr: values[4],
            vocab_entropy: values[5],
        }
    }

    pub fn is_valid(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
            && self.ned >= 0.0
            && (0.0..=1.0).contains(&self.norm_std)
            && (0.0..1.0).contains(&self.redundancy)
            && (0.0..=1.0).contains(&self.ele)
            && self.ssr >= 1.0
            && self.vocab_entropy >= 0.0
    }

    /// One CSV row in [`FEATURE_CSV_HEADER`] order.
    pub fn csv_row(&self) -> String {
        self.to_array().map(|v| v.to_string()).join(",")
    }
}

/// Categories that occur in the spans of `sentences`.
pub fn observed_categories(sentences: &[Sentence]) -> BTreeSet<String> {
    sentences
        .iter()
        .flat_map(|s| s.spans().iter().map(|sp| sp.category.clone()))
        .collect()
}

/// Information density: entity-token ratio with the sentence-length correction.
pub fn compute_ned(sentences: &[Sentence], cfg: &FeatureConfig) -> Result<f64, MetricsError> {
    if sentences.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut entity_tokens = 0usize;
    let mut total_tokens = 0usize;
    let mut entity_sentence_tokens = 0usize;
    for sentence in sentences {
        let et = sentence.entity_token_count();
        entity_tokens += et;
        total_tokens += sentence.len();
        if et > 0 {
            entity_sentence_tokens += sentence.len();
        }
    }
    if entity_tokens == 0 {
        return Ok(0.0);
    }
    let ratio = entity_tokens as f64 / total_tokens as f64;
    let log_arg = match cfg.ned_variant {
        NedVariant::Eq1 => entity_sentence_tokens as f64,
        NedVariant::RatioLog => total_tokens as f64 / entity_sentence_tokens as f64,
    };
    Ok(ratio * (1.0 + cfg.log_base.log(log_arg) * cfg.lambda))
}

/// Normalised standard deviation of category proportions over `categories`.
///
/// Categories in the universe with no spans count as zero proportions.
/// Returns 0 with fewer than two categories or no spans.
pub fn compute_norm_std(sentences: &[Sentence], categories: &BTreeSet<String>) -> f64 {
    let mut counts: BTreeMap<&str, usize> = categories.iter().map(|c| (c.as_str(), 0)).collect();
    for span in sentences.iter().flat_map(|s| s.spans()) {
        *counts.entry(span.category.as_str()).or_default() += 1;
    }
    let c = counts.len();
    let total: usize = counts.values().sum();
    if c <= 1 || total == 0 {
        return 0.0;
    }
    let c_f = c as f64;
    let mean = 1.0 / c_f;
    let variance = counts
        .values()
        .map(|&n| {
            let p = n as f64 / total as f64;
            (p - mean) * (p - mean)
        })
        .sum::<f64>()
        / c_f;
    let value = variance.sqrt() * c_f / (c_f - 1.0).sqrt();
    value.clamp(0.0, 1.0)
}

/// Proportion of duplicate `(tokens, labels)` sentences.
pub fn compute_redundancy(sentences: &[Sentence]) -> f64 {
    if sentences.is_empty() {
        return 0.0;
    }
    let distinct: HashSet<&[Token]> = sentences.iter().map(Sentence::tokens).collect();
    1.0 - distinct.len() as f64 / sentences.len() as f64
}

/// Mean normalised label entropy per distinct entity surface.
pub fn compute_ele(sentences: &[Sentence], categories: &BTreeSet<String>, case_sensitive: bool) -> f64 {
    let c = categories.len().max(observed_categories(sentences).len());
    if c < 2 {
        return 0.0;
    }
    let mut per_entity: BTreeMap<String, BTreeMap<&str, usize>> = BTreeMap::new();
    for span in sentences.iter().flat_map(|s| s.spans()) {
        let key = if case_sensitive { span.surface.clone() } else { span.surface.to_lowercase() };
        *per_entity.entry(key).or_default().entry(span.category.as_str()).or_default() += 1;
    }
    if per_entity.is_empty() {
        return 0.0;
    }
    let log_c = (c as f64).ln();
    let total: f64 = per_entity
        .values()
        .map(|counts| entropy_nats(counts.values().copied()) / log_c)
        .sum();
    (total / per_entity.len() as f64).clamp(0.0, 1.0)
}

/// Mean subword pieces per token.
pub fn compute_ssr(sentences: &[Sentence], segmenter: &Segmenter) -> Result<f64, MetricsError> {
    let mut tokens = 0usize;
    let mut pieces = 0usize;
    for token in sentences.iter().flat_map(|s| s.tokens()) {
        tokens += 1;
        pieces += segmenter.piece_count(&token.text);
    }
    if tokens == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(pieces as f64 / tokens as f64)
}

/// Shannon entropy (bits) of the token-text distribution.
pub fn compute_vocab_entropy(sentences: &[Sentence]) -> f64 {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for token in sentences.iter().flat_map(|s| s.tokens()) {
        *counts.entry(token.text.as_str()).or_default() += 1;
    }
    entropy_nats(counts.values().copied()) / std::f64::consts::LN_2
}

fn entropy_nats(counts: impl Iterator<Item = usize> + Clone) -> f64 {
    let total: usize = counts.clone().sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    let h: f64 = counts
        .filter(|&n| n > 0)
        .map(|n| {
            let p = n as f64 / total;
            -p * p.ln()
        })
        .sum();
    h.max(0.0)
}

/// Computes features with a pre-built segmenter, so a vocabulary file is read once.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    cfg: FeatureConfig,
    segmenter: Segmenter,
}

impl FeatureExtractor {
    pub fn new(cfg: &FeatureConfig) -> Result<Self, MetricsError> {
        cfg.validate()?;
        Ok(FeatureExtractor {
            cfg: cfg.clone(),
            segmenter: cfg.segmenter()?,
        })
    }

    pub fn with_segmenter(cfg: &FeatureConfig, segmenter: Segmenter) -> Result<Self, MetricsError> {
        cfg.validate()?;
        Ok(FeatureExtractor { cfg: cfg.clone(), segmenter })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    /// Features of `sentences`, with categories taken from their own spans.
    pub fn sentences(&self, sentences: &[Sentence]) -> Result<FeatureVector, MetricsError> {
        self.sentences_with_categories(sentences, &observed_categories(sentences))
    }

    pub fn sentences_with_categories(
        &self,
        sentences: &[Sentence],
        categories: &BTreeSet<String>,
    ) -> Result<FeatureVector, MetricsError> {
        if sentences.is_empty() {
            return Err(MetricsError::Empty);
        }
        Ok(FeatureVector {
            ned: compute_ned(sentences, &self.cfg)?,
            norm_std: compute_norm_std(sentences, categories),
            redundancy: compute_redundancy(sentences),
            ele: compute_ele(sentences, categories, self.cfg.ele_case_sensitive),
            ssr: compute_ssr(sentences, &self.segmenter)?,
            vocab_entropy: compute_vocab_entropy(sentences),
        })
    }

    pub fn corpus(&self, corpus: &Corpus) -> Result<FeatureVector, MetricsError> {
        self.sentences_with_categories(corpus.sentences(), corpus.categories())
    }
}

/// All six features of a corpus.
pub fn compute_features(corpus: &Corpus, cfg: &FeatureConfig) -> Result<FeatureVector, MetricsError> {
    FeatureExtractor::new(cfg)?.corpus(corpus)
}

/// Entity-token ratio `ET/TT` without correction.
pub fn entity_token_ratio(sentences: &[Sentence]) -> f64 {
    let total: usize = sentences.iter().map(Sentence::len).sum();
    if total == 0 {
        return 0.0;
    }
    sentences.iter().map(Sentence::entity_token_count).sum::<usize>() as f64 / total as f64
}

/// Builds a sentence from `(text, label)` pairs; test and fixture helper.
pub fn sentence_from_pairs(id: usize, pairs: &[(&str, &str)]) -> Sentence {
    let tokens = pairs
        .iter()
        .map(|(t, l)| Token::new(*t, l.parse::<Label>().expect("valid label")))
        .collect();
    Sentence::new(id, tokens).expect("valid sentence")
}
