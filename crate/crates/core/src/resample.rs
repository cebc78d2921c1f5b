//! Experiment subsets: entity-rate families `D_p` and stratified subsets with
//! spread-out structural features.
//!
//! Resampling only selects sentence ids. Tokens and labels are never edited,
//! so annotation consistency is preserved by construction.

use std::collections::HashMap;

use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Sentence};
use crate::metrics::{FeatureExtractor, FeatureVector, MetricsError};
use crate::rng;

#[derive(Debug, Error)]
pub enum ResampleError {
    #[error("corpus has no entity-bearing sentences")]
    NoEntitySentences,
    #[error("sampling rate p must lie in (0, 1], got {0}")]
    InvalidRate(f64),
    #[error("stratified sampling needs count >= 2, got {0}")]
    TooFewSubsets(usize),
    #[error("rarity_bins must be >= 1")]
    NoBins,
    #[error("spec strategy is {0:?}, expected {1:?}")]
    WrongStrategy(Strategy, Strategy),
    #[error("manifest references sentence {id} but the corpus has {len}")]
    IdOutOfRange { id: usize, len: usize },
    #[error("manifest features differ from recomputed features: {0}")]
    FeatureMismatch(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Stratified,
    DensityFamily,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetSpec {
    pub seed: u64,
    pub strategy: Strategy,
    /// Retained share of entity-bearing sentences (density family only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    /// Number of subsets (stratified only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default = "default_rarity_bins")]
    pub rarity_bins: usize,
    /// Keep every rarity bin of entity sentences at the same rate.
    #[serde(default = "default_true")]
    pub rarity_control: bool,
}

fn default_rarity_bins() -> usize {
    4
}

fn default_true() -> bool {
    true
}

impl SubsetSpec {
    pub fn density(p: f64, seed: u64) -> Self {
        SubsetSpec {
            seed,
            strategy: Strategy::DensityFamily,
            p: Some(p),
            count: None,
            rarity_bins: default_rarity_bins(),
            rarity_control: true,
        }
    }

    pub fn stratified(count: usize, seed: u64) -> Self {
        SubsetSpec {
            seed,
            strategy: Strategy::Stratified,
            p: None,
            count: Some(count),
            rarity_bins: default_rarity_bins(),
            rarity_control: true,
        }
    }
}

/// Sampling rate used for one stratum of a stratified subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRate {
    /// `"no_entity"` or `"rarity_q{k}"` (q0 holds the rarest entities).
    pub bin: String,
    pub size: usize,
    pub rate: f64,
    pub retained: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetManifest {
    pub subset_id: String,
    pub spec: SubsetSpec,
    pub sentence_ids: Vec<usize>,
    pub features: FeatureVector,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bin_rates: Vec<BinRate>,
}

fn retained_count(rate: f64, size: usize) -> usize {
    // Guard against p * n landing a hair above an integer.
    let raw = (rate * size as f64 - 1e-9).ceil();
    (raw.max(0.0) as usize).min(size)
}

fn split_entity_sentences(corpus: &Corpus) -> (Vec<usize>, Vec<usize>) {
    corpus
        .sentences()
        .iter()
        .map(Sentence::id)
        .partition(|&id| corpus.sentences()[id].entity_token_count() > 0)
}

/// `D_p`: a `ceil(p * |D_E|)` sample of entity sentences plus every entity-free
/// sentence.
///
/// One seeded permutation of `D_E` is cut at different lengths, so for the
/// same seed a smaller `p` always selects a subset of a larger one.
pub fn build_density_subset(
    corpus: &Corpus,
    p: f64,
    seed: u64,
    extractor: &FeatureExtractor,
) -> Result<SubsetManifest, ResampleError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(ResampleError::InvalidRate(p));
    }
    let (mut entity, plain) = split_entity_sentences(corpus);
    if entity.is_empty() {
        return Err(ResampleError::NoEntitySentences);
    }
    entity.shuffle(&mut rng::stream(seed, "resample/density"));
    let keep = retained_count(p, entity.len());
    let mut ids: Vec<usize> = entity[..keep].iter().chain(&plain).copied().collect();
    ids.sort_unstable();
    let features = extractor.corpus(&corpus.select(&ids))?;
    Ok(SubsetManifest {
        subset_id: format!("density_p{p:.3}"),
        spec: SubsetSpec::density(p, seed),
        sentence_ids: ids,
        features,
        bin_rates: Vec::new(),
    })
}

/// The nested family for each rate in `rates` (any order).
pub fn build_density_family(
    corpus: &Corpus,
    rates: &[f64],
    seed: u64,
    extractor: &FeatureExtractor,
) -> Result<Vec<SubsetManifest>, ResampleError> {
    rates
        .iter()
        .map(|&p| build_density_subset(corpus, p, seed, extractor))
        .collect()
}

/// Lowest and highest sampling rate a stratum can receive.
const MIN_RATE: f64 = 0.1;
const MAX_RATE: f64 = 1.0;

/// Attempts at drawing a manifest that differs from all earlier ones.
const MAX_REDRAWS: u64 = 16;

/// Strata: bin 0 holds entity-free sentences; entity sentences are split into
/// `rarity_bins` equal-size quantiles of their rarest span surface frequency.
fn strata(corpus: &Corpus, rarity_bins: usize) -> Vec<(String, Vec<usize>)> {
    let mut surface_freq: HashMap<String, usize> = HashMap::new();
    for span in corpus.spans() {
        *surface_freq.entry(span.surface.to_lowercase()).or_default() += 1;
    }
    let (entity, plain) = split_entity_sentences(corpus);
    let mut scored: Vec<(usize, usize)> = entity
        .into_iter()
        .map(|id| {
            let rarity = corpus.sentences()[id]
                .spans()
                .iter()
                .map(|s| surface_freq[&s.surface.to_lowercase()])
                .min()
                .unwrap_or(usize::MAX);
            (rarity, id)
        })
        .collect();
    scored.sort_unstable();
    let mut bins = vec![("no_entity".to_string(), plain)];
    let n = scored.len();
    for q in 0..rarity_bins {
        let lo = q * n / rarity_bins;
        let hi = (q + 1) * n / rarity_bins;
        bins.push((format!("rarity_q{q}"), scored[lo..hi].iter().map(|&(_, id)| id).collect()));
    }
    bins
}

/// Point `index` of a scrambled Sobol design, mapped to `[MIN_RATE, MAX_RATE]`.
fn design_rate(index: u64, dim: u32, seed: u64) -> f64 {
    let scramble = (seed ^ (seed >> 32)) as u32;
    let x = f64::from(sobol_burley::sample((index % (1 << 16)) as u32, dim, scramble));
    MIN_RATE + (MAX_RATE - MIN_RATE) * x
}

/// Builds `spec.count` stratified subsets whose per-stratum sampling rates come
/// from a low-discrepancy design, so densities spread across the observable
/// range. With `rarity_control`, all entity strata share one rate and the mix
/// of rare vs. frequent entities is held fixed.
pub fn build_stratified_subsets(
    corpus: &Corpus,
    spec: &SubsetSpec,
    extractor: &FeatureExtractor,
) -> Result<Vec<SubsetManifest>, ResampleError> {
    if spec.strategy != Strategy::Stratified {
        return Err(ResampleError::WrongStrategy(spec.strategy, Strategy::Stratified));
    }
    let count = spec.count.unwrap_or(0);
    if count < 2 {
        return Err(ResampleError::TooFewSubsets(count));
    }
    if spec.rarity_bins == 0 {
        return Err(ResampleError::NoBins);
    }
    let bins = strata(corpus, spec.rarity_bins);
    if bins[1..].iter().all(|(_, ids)| ids.is_empty()) {
        return Err(ResampleError::NoEntitySentences);
    }

    let mut manifests: Vec<SubsetManifest> = Vec::with_capacity(count);
    for j in 0..count {
        let mut attempt = 0;
        let manifest = loop {
            let sub_seed = rng::derive_seed(spec.seed, "resample/stratified", (j as u64) | (attempt << 32));
            // Design index shifted past 0 so the all-zero corner is not used.
            let point = j as u64 + 1 + attempt * count as u64;
            let plain_rate = design_rate(point, 0, spec.seed);
            let entity_rate = design_rate(point, 1, spec.seed);
            let mut rng = rng::stream(sub_seed, "resample/stratified/draw");
            let mut ids = Vec::new();
            let mut rates = Vec::with_capacity(bins.len());
            for (b, (name, members)) in bins.iter().enumerate() {
                let rate = match b {
                    0 => plain_rate,
                    _ if spec.rarity_control => entity_rate,
                    _ => design_rate(point, 1 + b as u32, spec.seed),
                };
                let keep = retained_count(rate, members.len()).max(usize::from(!members.is_empty()));
                ids.extend(members.choose_multiple(&mut rng, keep).copied());
                rates.push(BinRate {
                    bin: name.clone(),
                    size: members.len(),
                    rate,
                    retained: keep,
                });
            }
            ids.sort_unstable();
            let duplicate = manifests.iter().any(|m| m.sentence_ids == ids);
            if !duplicate || attempt + 1 >= MAX_REDRAWS {
                let features = extractor.corpus(&corpus.select(&ids))?;
                break SubsetManifest {
                    subset_id: format!("stratified_{j:03}"),
                    spec: SubsetSpec {
                        seed: sub_seed,
                        ..spec.clone()
                    },
                    sentence_ids: ids,
                    features,
                    bin_rates: rates,
                };
            }
            attempt += 1;
        };
        manifests.push(manifest);
    }
    Ok(manifests)
}

/// The manifest's sentences as a corpus, in original order with fresh ids.
pub fn materialize(corpus: &Corpus, manifest: &SubsetManifest) -> Result<Corpus, ResampleError> {
    if let Some(&id) = manifest.sentence_ids.iter().find(|&&id| id >= corpus.len()) {
        return Err(ResampleError::IdOutOfRange { id, len: corpus.len() });
    }
    Ok(corpus.select(&manifest.sentence_ids))
}

/// Recomputes a manifest's features and checks them against the stored ones.
pub fn verify_manifest(
    corpus: &Corpus,
    manifest: &SubsetManifest,
    extractor: &FeatureExtractor,
    tolerance: f64,
) -> Result<(), ResampleError> {
    let sub = materialize(corpus, manifest)?;
    let fresh = extractor.corpus(&sub)?;
    let stored = manifest.features.to_array();
    for (i, (a, b)) in fresh.to_array().iter().zip(stored).enumerate() {
        if (a - b).abs() > tolerance {
            return Err(ResampleError::FeatureMismatch(format!(
                "{}: stored {b}, recomputed {a}",
                crate::metrics::Feature::ALL[i]
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Label, Token};
    use crate::metrics::{compute_ned, o_label_proportion, FeatureConfig};

    fn extractor() -> FeatureExtractor {
        FeatureExtractor::new(&FeatureConfig::default()).unwrap()
    }

    /// `entity` sentences with one entity each, followed by `plain` all-O sentences.
    fn fixture(entity: usize, plain: usize) -> Corpus {
        let mut sentences = Vec::new();
        for i in 0..entity {
            sentences.push(
                Sentence::new(
                    i,
                    vec![
                        Token::new(format!("E{}", i % 7), Label::begin(["loc", "per", "org"][i % 3])),
                        Token::new("said", Label::Outside),
                        Token::new(format!("w{i}"), Label::Outside),
                    ],
                )
                .unwrap(),
            );
        }
        for i in 0..plain {
            sentences.push(
                Sentence::new(
                    entity + i,
                    vec![Token::new("lol", Label::Outside), Token::new(format!("x{i}"), Label::Outside)],
                )
                .unwrap(),
            );
        }
        Corpus::from_sentences(sentences, "fixture")
    }

    #[test]
    fn full_rate_is_identity() {
        let c = fixture(10, 5);
        let m = build_density_subset(&c, 1.0, 3, &extractor()).unwrap();
        assert_eq!(m.sentence_ids, (0..15).collect::<Vec<_>>());
        assert_eq!(m.features, extractor().corpus(&c).unwrap());
    }

    #[test]
    fn half_rate_keeps_five_of_ten() {
        let c = fixture(10, 5);
        let m = build_density_subset(&c, 0.5, 3, &extractor()).unwrap();
        let entity_kept = m.sentence_ids.iter().filter(|&&i| i < 10).count();
        let plain_kept = m.sentence_ids.iter().filter(|&&i| i >= 10).count();
        assert_eq!((entity_kept, plain_kept), (5, 5));
    }

    #[test]
    fn density_family_is_nested_and_monotone() {
        let c = fixture(40, 30);
        let rates = [1.0, 0.9, 0.8, 0.7, 0.6, 0.5];
        let family = build_density_family(&c, &rates, 11, &extractor()).unwrap();
        let zero = FeatureConfig { lambda: 0.0, ..Default::default() };
        for pair in family.windows(2) {
            let (big, small) = (&pair[0], &pair[1]);
            assert!(small.sentence_ids.iter().all(|id| big.sentence_ids.contains(id)));
            let ned = |m: &SubsetManifest| compute_ned(c.select(&m.sentence_ids).sentences(), &zero).unwrap();
            assert!(ned(small) <= ned(big) + 1e-12);
            let o = |m: &SubsetManifest| o_label_proportion(c.select(&m.sentence_ids).sentences());
            assert!(o(small) >= o(big) - 1e-12);
        }
    }

    #[test]
    fn density_errors() {
        let c = fixture(0, 4);
        assert!(matches!(build_density_subset(&c, 0.5, 1, &extractor()), Err(ResampleError::NoEntitySentences)));
        let c = fixture(3, 1);
        assert!(matches!(build_density_subset(&c, 0.0, 1, &extractor()), Err(ResampleError::InvalidRate(_))));
        assert!(matches!(build_density_subset(&c, 1.5, 1, &extractor()), Err(ResampleError::InvalidRate(_))));
    }

    #[test]
    fn stratified_smallest_case() {
        let c = fixture(4, 2);
        let spec = SubsetSpec::stratified(2, 5);
        let ms = build_stratified_subsets(&c, &spec, &extractor()).unwrap();
        assert_eq!(ms.len(), 2);
        assert_ne!(ms[0].sentence_ids, ms[1].sentence_ids);
        for m in &ms {
            verify_manifest(&c, m, &extractor(), 1e-12).unwrap();
        }
    }

    #[test]
    fn stratified_rejects_bad_specs() {
        let c = fixture(4, 2);
        assert!(matches!(
            build_stratified_subsets(&c, &SubsetSpec::stratified(1, 5), &extractor()),
            Err(ResampleError::TooFewSubsets(1))
        ));
        assert!(matches!(
            build_stratified_subsets(&c, &SubsetSpec::density(0.5, 5), &extractor()),
            Err(ResampleError::WrongStrategy(..))
        ));
    }

    #[test]
    fn stratified_is_deterministic() {
        let c = fixture(60, 40);
        let spec = SubsetSpec::stratified(5, 9);
        let a = serde_json::to_string(&build_stratified_subsets(&c, &spec, &extractor()).unwrap()).unwrap();
        let b = serde_json::to_string(&build_stratified_subsets(&c, &spec, &extractor()).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn materialize_checks_ids() {
        let c = fixture(4, 2);
        let mut m = build_density_subset(&c, 0.5, 1, &extractor()).unwrap();
        let sub = materialize(&c, &m).unwrap();
        assert_eq!(sub.len(), m.sentence_ids.len());
        m.sentence_ids.push(99);
        assert!(matches!(materialize(&c, &m), Err(ResampleError::IdOutOfRange { id: 99, .. })));
    }
}
