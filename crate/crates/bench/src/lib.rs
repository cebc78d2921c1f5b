//! Seeded inputs shared by the benchmarks.

use densekit::asa::{softmax, AttentionTensor, TensorMeta};
use densekit::{Corpus, Label, Sentence, Token};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CATEGORIES: [&str; 5] = ["per", "loc", "org", "misc", "date"];

/// `n` sentences of 8-30 tokens; roughly half carry an entity.
pub fn corpus(n: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sentences = (0..n).map(|id| {
        let len = rng.random_range(8..=30);
        let tokens = (0..len)
            .map(|_| {
                if rng.random_bool(0.08) {
                    let c = CATEGORIES[rng.random_range(0..CATEGORIES.len())];
                    Token::new(format!("Ent{}", rng.random_range(0..200)), Label::begin(c))
                } else {
                    Token::new(format!("w{}", rng.random_range(0..2000)), Label::Outside)
                }
            })
            .collect();
        Sentence::new(id, tokens).expect("B- and O tags only")
    });
    Corpus::from_sentences(sentences.collect::<Vec<_>>(), "bench")
}

pub fn attention(layers: usize, heads: usize, len: usize, seed: u64) -> AttentionTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Vec::with_capacity(layers * heads * len * len);
    for _ in 0..layers * heads * len {
        let logits: Vec<f64> = (0..len).map(|_| rng.random_range(-2.0..2.0)).collect();
        w.extend(softmax(&logits, 1.0).into_iter().map(|v| v as f32));
    }
    AttentionTensor::new(layers, heads, len, w, TensorMeta::default()).expect("softmax rows")
}
