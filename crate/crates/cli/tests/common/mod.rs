#![allow(dead_code)]

use std::path::Path;
use std::process::Command;

use densekit::asa::{softmax, AttentionTensor, TensorMeta};
use densekit::corpus::to_conll_string;
use densekit::metrics::sentence_from_pairs;
use densekit::{Corpus, Label, Sentence, Token};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

pub const CATEGORIES: [&str; 6] = ["per", "loc", "org", "misc", "date", "prod"];

/// Size of the background vocabulary.
const FILLER_VOCAB: usize = 2000;

/// Cumulative Zipf(1) weights over the background vocabulary.
fn zipf_cdf() -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = (1..=FILLER_VOCAB)
        .map(|r| {
            acc += 1.0 / r as f64;
            acc
        })
        .collect();
    let total = acc;
    cdf.iter_mut().for_each(|c| *c /= total);
    cdf
}

/// Lower-case pseudo-word for background rank `r`.
fn filler_word(r: usize) -> String {
    let syllables = ["ta", "ne", "ri", "so", "ka", "lu", "me", "po", "di", "fa"];
    let mut n = r;
    let mut w = String::new();
    loop {
        w.push_str(syllables[n % 10]);
        n /= 10;
        if n == 0 {
            break;
        }
    }
    w
}

/// Entity surfaces per category; earlier names are drawn more often.
fn surfaces(category: &str) -> Vec<String> {
    (0..12).map(|i| format!("{}{}", capitalize(category), ["ax", "bo", "cu", "dri", "el", "fo", "gu", "ha", "ik", "jo", "ku", "lu"][i])).collect()
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

/// A seeded corpus with `n` sentences over six categories. About 60% of the
/// sentences carry one to three entities, the rest are all-O.
pub fn synthetic_corpus(seed: u64, n: usize) -> Corpus {
    synthetic_corpus_with(seed, n, 0.6)
}

/// As [`synthetic_corpus`] with `entity_rate` of sentences carrying entities.
pub fn synthetic_corpus_with(seed: u64, n: usize, entity_rate: f64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pools: Vec<Vec<String>> = CATEGORIES.iter().map(|c| surfaces(c)).collect();
    let cdf = zipf_cdf();
    let mut sentences = Vec::with_capacity(n);
    for id in 0..n {
        let len = rng.random_range(6..=20);
        let mut pairs: Vec<(String, String)> = (0..len)
            .map(|_| {
                let u: f64 = rng.random();
                (filler_word(cdf.partition_point(|&c| c < u)), "O".to_string())
            })
            .collect();
        if rng.random_bool(entity_rate) {
            let entities = rng.random_range(1..=3);
            for _ in 0..entities {
                let c = rng.random_range(0..CATEGORIES.len());
                // Zipf-ish pick: min of two uniform draws favours low indices.
                let s = rng.random_range(0..12).min(rng.random_range(0..12));
                let pos = rng.random_range(0..pairs.len());
                pairs[pos] = (pools[c][s].clone(), format!("B-{}", CATEGORIES[c]));
                if rng.random_bool(0.3) && pos + 1 < pairs.len() {
                    pairs[pos + 1] = ("Jr".to_string(), format!("I-{}", CATEGORIES[c]));
                }
            }
        }
        let tokens = pairs.into_iter().map(|(t, l)| Token::new(t, l.parse::<Label>().unwrap())).collect();
        // A later entity can overwrite the B- of an earlier two-token one.
        let (s, _) = Sentence::coerced(id, tokens).unwrap();
        sentences.push(s);
    }
    Corpus::from_sentences(sentences, format!("synthetic-{seed}"))
}

pub fn write_corpus(corpus: &Corpus, path: &Path) {
    std::fs::write(path, to_conll_string(corpus).unwrap()).unwrap();
}

pub fn sentence(id: usize, pairs: &[(&str, &str)]) -> Sentence {
    sentence_from_pairs(id, pairs)
}

/// `layers x heads` softmax attention over random logits at temperature `tau`.
pub fn random_tensor(rng: &mut ChaCha8Rng, layers: usize, heads: usize, len: usize, tau: f64) -> AttentionTensor {
    let mut w = Vec::with_capacity(layers * heads * len * len);
    for _ in 0..layers * heads * len {
        let logits: Vec<f64> = (0..len).map(|_| rng.random_range(-2.0..2.0)).collect();
        w.extend(softmax(&logits, tau).into_iter().map(|v| v as f32));
    }
    AttentionTensor::new(layers, heads, len, w, TensorMeta::default()).unwrap()
}

pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Output {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.stdout).unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", self.stdout))
    }

    pub fn error_json(&self) -> Value {
        serde_json::from_str(self.stderr.trim()).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {}", self.stderr))
    }
}

pub fn densekit(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_densekit")).args(args).output().expect("binary runs");
    Output {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

/// Validates `instance` against `schemas/<name>.schema.json`.
pub fn assert_schema(name: &str, instance: &Value) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(format!("{name}.schema.json"));
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap_or_else(|e| panic!("{name}: bad schema: {e}"));
    let errors: Vec<String> = validator.iter_errors(instance).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{name} schema violations: {errors:#?}");
}
