//! Window-aware densification.
//!
//! The corpus is cut into consecutive windows of `W` sentences. Windows whose
//! density is at or below the threshold are *barren*; each entity-bearing
//! sentence in a barren window is back-translated through a pivot language
//! with its entities locked behind placeholders, and the accepted paraphrases
//! are inserted right after the window.

mod backend;
mod placeholder;

use std::collections::BTreeMap;
use std::ops::Range;
use std::thread;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{
    BackendConfig, BackendError, Call, CallLog, Cassette, HttpBackend, Interaction, MockBackend, MockBehavior,
    TranslationBackend,
};
pub use placeholder::{placeholder_encode, verify_and_restore, AugmentationCandidate, EncodeError, PlaceholderFormat};

use crate::corpus::{Corpus, Sentence};
use crate::metrics::{compute_ned, FeatureConfig, MetricsError};

#[derive(Debug, Error)]
pub enum WomError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("aborted: backend failure rate {rate:.2} exceeds limit {limit:.2}")]
    Aborted {
        rate: f64,
        limit: f64,
        report: Box<WomReport>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WomMode {
    #[default]
    Wom,
    /// Augment every entity-bearing sentence regardless of windows.
    GlobalAugment,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    #[default]
    Fixed,
    /// `T = adaptive_fraction * mean window density`.
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WomConfig {
    pub window_size: usize,
    pub threshold: f64,
    pub threshold_mode: ThresholdMode,
    pub adaptive_fraction: f64,
    pub source_language: String,
    pub pivot_language: String,
    pub backend: BackendConfig,
    pub seed: u64,
    pub mode: WomMode,
    pub placeholder: PlaceholderFormat,
    /// Concurrent sentences in flight.
    pub in_flight: usize,
    /// Retries per backend call before the sentence is rejected.
    pub retries: usize,
    /// First retry delay; doubles on each further retry.
    pub backoff_ms: u64,
    /// Abort once the share of sentences lost to backend errors exceeds this.
    pub failure_limit: f64,
    /// Sentences attempted before the failure limit is enforced.
    pub failure_min_attempts: usize,
}

impl Default for WomConfig {
    fn default() -> Self {
        WomConfig {
            window_size: 30,
            threshold: 0.07,
            threshold_mode: ThresholdMode::Fixed,
            adaptive_fraction: 0.8,
            source_language: "en".into(),
            pivot_language: "zh".into(),
            backend: BackendConfig::default(),
            seed: 0,
            mode: WomMode::Wom,
            placeholder: PlaceholderFormat::default(),
            in_flight: 4,
            retries: 2,
            backoff_ms: 200,
            failure_limit: 0.5,
            failure_min_attempts: 4,
        }
    }
}

impl WomConfig {
    pub fn validate(&self) -> Result<(), WomError> {
        let bad = |m: String| Err(WomError::Config(m));
        if self.window_size == 0 {
            return bad("window_size must be >= 1".into());
        }
        if !(self.threshold >= 0.0) || !self.threshold.is_finite() {
            return bad(format!("threshold must be finite and >= 0, got {}", self.threshold));
        }
        if !(self.adaptive_fraction > 0.0) || !self.adaptive_fraction.is_finite() {
            return bad(format!("adaptive_fraction must be > 0, got {}", self.adaptive_fraction));
        }
        if self.in_flight == 0 {
            return bad("in_flight must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.failure_limit) {
            return bad(format!("failure_limit must be in [0, 1], got {}", self.failure_limit));
        }
        if self.source_language == self.pivot_language {
            return bad("pivot language must differ from the source language".into());
        }
        self.placeholder.validate().map_err(WomError::Config)
    }

    /// Builds the configured backend for this run.
    pub fn build_backend(&self) -> Result<Box<dyn TranslationBackend>, WomError> {
        Ok(self.backend.build(self.seed, &self.source_language, &self.placeholder)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub index: usize,
    /// Positions in the corpus; ids equal positions in a parsed corpus.
    pub sentence_ids: Range<usize>,
    pub density: f64,
    pub barren: bool,
}

/// Splits the corpus into `ceil(n / W)` windows and flags the barren ones.
/// Returns the windows and the threshold actually used.
pub fn segment_windows(
    corpus: &Corpus,
    cfg: &WomConfig,
    metric_cfg: &FeatureConfig,
) -> Result<(Vec<Window>, f64), WomError> {
    cfg.validate()?;
    let sentences = corpus.sentences();
    let mut windows = Vec::with_capacity(sentences.len().div_ceil(cfg.window_size));
    for (index, start) in (0..sentences.len()).step_by(cfg.window_size).enumerate() {
        let end = (start + cfg.window_size).min(sentences.len());
        windows.push(Window {
            index,
            sentence_ids: start..end,
            density: compute_ned(&sentences[start..end], metric_cfg)?,
            barren: false,
        });
    }
    let threshold = match cfg.threshold_mode {
        ThresholdMode::Fixed => cfg.threshold,
        ThresholdMode::Adaptive if windows.is_empty() => 0.0,
        ThresholdMode::Adaptive => {
            cfg.adaptive_fraction * windows.iter().map(|w| w.density).sum::<f64>() / windows.len() as f64
        }
    };
    for w in &mut windows {
        w.barren = w.density <= threshold;
    }
    Ok((windows, threshold))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    PlaceholderLost,
    PlaceholderDuplicated,
    /// Unknown, malformed or reordered placeholder.
    EntityMutated,
    BackendError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Forward,
    Back,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub sentence_id: usize,
    pub reason: RejectReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptedSentence {
    pub source_id: usize,
    pub sentence: Sentence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationResult {
    pub window_index: usize,
    pub accepted: Vec<AcceptedSentence>,
    pub rejected: Vec<Rejection>,
    pub density_before: f64,
    pub density_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WomReport {
    pub mode: WomMode,
    pub window_size: usize,
    pub threshold: f64,
    pub windows: Vec<Window>,
    pub results: Vec<AugmentationResult>,
    pub reject_tally: BTreeMap<RejectReason, usize>,
    /// Only placeholder integrity is verified, not translation quality.
    pub verification: String,
    pub sentences_in: usize,
    pub sentences_out: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

impl WomReport {
    pub fn barren_windows(&self) -> usize {
        self.windows.iter().filter(|w| w.barren).count()
    }

    pub fn accepted(&self) -> usize {
        self.results.iter().map(|r| r.accepted.len()).sum()
    }

    pub fn rejected(&self) -> usize {
        self.results.iter().map(|r| r.rejected.len()).sum()
    }

    /// Sentences sent through the pipeline.
    pub fn candidates(&self) -> usize {
        self.accepted() + self.rejected()
    }
}

fn translate_with_retry(
    backend: &dyn TranslationBackend,
    text: &str,
    from: &str,
    to: &str,
    cfg: &WomConfig,
) -> Result<String, BackendError> {
    let mut attempt = 0;
    loop {
        match backend.translate(text, from, to) {
            Ok(out) => return Ok(out),
            Err(e) if attempt >= cfg.retries => return Err(e),
            Err(_) => {
                if cfg.backoff_ms > 0 {
                    thread::sleep(Duration::from_millis(cfg.backoff_ms << attempt.min(16)));
                }
                attempt += 1;
            }
        }
    }
}

/// Source to pivot and back.
pub fn backtranslate(
    candidate: &AugmentationCandidate,
    backend: &dyn TranslationBackend,
    cfg: &WomConfig,
) -> Result<String, (Stage, BackendError)> {
    let pivot = translate_with_retry(
        backend,
        &candidate.placeholdered_text,
        &cfg.source_language,
        &cfg.pivot_language,
        cfg,
    )
    .map_err(|e| (Stage::Forward, e))?;
    translate_with_retry(backend, &pivot, &cfg.pivot_language, &cfg.source_language, cfg).map_err(|e| (Stage::Back, e))
}

fn augment_one(sentence: &Sentence, backend: &dyn TranslationBackend, cfg: &WomConfig) -> Result<Sentence, Rejection> {
    let reject = |reason, stage, detail| Rejection {
        sentence_id: sentence.id(),
        reason,
        stage,
        detail,
    };
    let candidate = placeholder_encode(sentence, &cfg.placeholder)
        .map_err(|e| reject(RejectReason::EntityMutated, None, Some(e.to_string())))?;
    let roundtrip = backtranslate(&candidate, backend, cfg)
        .map_err(|(stage, e)| reject(RejectReason::BackendError, Some(stage), Some(e.to_string())))?;
    verify_and_restore(&candidate, &roundtrip, &cfg.placeholder).map_err(|reason| reject(reason, None, None))
}

/// Runs the configured mode and returns the augmented corpus with its report.
///
/// The input corpus is never modified. With `Wom`, accepted sentences follow
/// their window; with `GlobalAugment`, the whole corpus is treated as one
/// window and accepted sentences are appended at the end.
pub fn run_wom(
    corpus: &Corpus,
    cfg: &WomConfig,
    metric_cfg: &FeatureConfig,
    backend: &dyn TranslationBackend,
) -> Result<(Corpus, WomReport), WomError> {
    if corpus.is_empty() {
        return Err(WomError::EmptyCorpus);
    }
    let (windows, threshold) = segment_windows(corpus, cfg, metric_cfg)?;
    let sentences = corpus.sentences();
    let mut report = WomReport {
        mode: cfg.mode,
        window_size: cfg.window_size,
        threshold,
        windows,
        results: Vec::new(),
        reject_tally: BTreeMap::new(),
        verification: "placeholder_integrity".into(),
        sentences_in: sentences.len(),
        sentences_out: sentences.len(),
        aborted: None,
    };

    let groups: Vec<(usize, Range<usize>)> = match cfg.mode {
        WomMode::Off => Vec::new(),
        WomMode::Wom => report
            .windows
            .iter()
            .filter(|w| w.barren)
            .map(|w| (w.index, w.sentence_ids.clone()))
            .collect(),
        WomMode::GlobalAugment => vec![(0, 0..sentences.len())],
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.in_flight)
        .build()
        .map_err(|e| WomError::Config(e.to_string()))?;
    let mut attempted = 0usize;
    let mut failed = 0usize;
    for (window_index, range) in groups {
        let originals = &sentences[range];
        let outcomes: Vec<Result<Sentence, Rejection>> = pool.install(|| {
            originals
                .par_iter()
                .filter(|s| s.has_entities())
                .map(|s| augment_one(s, backend, cfg))
                .collect()
        });
        let mut accepted = Vec::new();
        let mut rejected = Vec::new();
        for outcome in outcomes {
            match outcome {
                Ok(s) => accepted.push(AcceptedSentence {
                    source_id: s.id(),
                    sentence: s,
                }),
                Err(r) => rejected.push(r),
            }
        }
        attempted += accepted.len() + rejected.len();
        failed += rejected.iter().filter(|r| r.reason == RejectReason::BackendError).count();
        let density_before = compute_ned(originals, metric_cfg)?;
        let mut merged = originals.to_vec();
        merged.extend(accepted.iter().map(|a| a.sentence.clone()));
        let density_after = compute_ned(&merged, metric_cfg)?;
        report.results.push(AugmentationResult {
            window_index,
            accepted,
            rejected,
            density_before,
            density_after,
        });

        let rate = failed as f64 / attempted.max(1) as f64;
        if attempted >= cfg.failure_min_attempts && rate > cfg.failure_limit {
            report.aborted = Some(format!("backend failure rate {rate:.3} after {attempted} sentences"));
            tally(&mut report);
            return Err(WomError::Aborted {
                rate,
                limit: cfg.failure_limit,
                report: Box::new(report),
            });
        }
    }
    tally(&mut report);

    let mut out: Vec<Sentence> = Vec::with_capacity(sentences.len() + report.accepted());
    let by_window: BTreeMap<usize, &AugmentationResult> = report.results.iter().map(|r| (r.window_index, r)).collect();
    match cfg.mode {
        WomMode::GlobalAugment => {
            out.extend(sentences.iter().cloned());
            for r in &report.results {
                out.extend(r.accepted.iter().map(|a| a.sentence.clone()));
            }
        }
        _ => {
            for w in &report.windows {
                out.extend(sentences[w.sentence_ids.clone()].iter().cloned());
                if let Some(r) = by_window.get(&w.index) {
                    out.extend(r.accepted.iter().map(|a| a.sentence.clone()));
                }
            }
        }
    }
    report.sentences_out = out.len();
    Ok((Corpus::from_sentences(out, corpus.source_path()), report))
}

fn tally(report: &mut WomReport) {
    report.reject_tally.clear();
    for r in report.results.iter().flat_map(|r| &r.rejected) {
        *report.reject_tally.entry(r.reason).or_insert(0) += 1;
    }
}

/// One cell of a hyperparameter sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub window_size: usize,
    pub threshold: f64,
    pub windows: usize,
    pub barren_windows: usize,
    pub candidates: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub sentences_out: usize,
}

/// Runs WOM with a fixed threshold for each `(W, T)` cell.
pub fn sweep(
    corpus: &Corpus,
    base: &WomConfig,
    metric_cfg: &FeatureConfig,
    backend: &dyn TranslationBackend,
    grid: &[(usize, f64)],
) -> Result<Vec<SweepRow>, WomError> {
    grid.iter()
        .map(|&(window_size, threshold)| {
            let cfg = WomConfig {
                window_size,
                threshold,
                threshold_mode: ThresholdMode::Fixed,
                ..base.clone()
            };
            let (_, report) = run_wom(corpus, &cfg, metric_cfg, backend)?;
            Ok(SweepRow {
                window_size,
                threshold,
                windows: report.windows.len(),
                barren_windows: report.barren_windows(),
                candidates: report.candidates(),
                accepted: report.accepted(),
                rejected: report.rejected(),
                sentences_out: report.sentences_out,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests;
