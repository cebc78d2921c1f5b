//! Entity locking: spans become opaque placeholder tokens before translation
//! and are restored, with their labels, afterwards.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::RejectReason;
use crate::corpus::{EntitySpan, Label, Sentence, Token};

/// Placeholder glyphs: `{open}{stem}{n}{close}`, e.g. `⟦ENT0⟧`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct PlaceholderFormat {
    pub open: String,
    pub stem: String,
    pub close: String,
}

impl Default for PlaceholderFormat {
    fn default() -> Self {
        PlaceholderFormat {
            open: "⟦".into(),
            stem: "ENT".into(),
            close: "⟧".into(),
        }
    }
}

impl PlaceholderFormat {
    pub fn validate(&self) -> Result<(), String> {
        for (name, part) in [("open", &self.open), ("stem", &self.stem), ("close", &self.close)] {
            if part.is_empty() || part.chars().any(|c| c.is_whitespace() || c.is_ascii_digit()) {
                return Err(format!("placeholder {name} {part:?} must be non-empty, without spaces or digits"));
            }
        }
        Ok(())
    }

    pub fn token(&self, n: usize) -> String {
        format!("{}{}{n}{}", self.open, self.stem, self.close)
    }

    fn body(&self) -> String {
        format!("{}{}(\\d+){}", regex::escape(&self.open), regex::escape(&self.stem), regex::escape(&self.close))
    }

    /// Compiled patterns, shared per format for the life of the process.
    pub(crate) fn matcher(&self) -> Arc<Matcher> {
        static CACHE: OnceLock<Mutex<HashMap<PlaceholderFormat, Arc<Matcher>>>> = OnceLock::new();
        let mut cache = CACHE.get_or_init(Default::default).lock().unwrap_or_else(|e| e.into_inner());
        Arc::clone(cache.entry(self.clone()).or_insert_with(|| Arc::new(self.compile())))
    }

    fn compile(&self) -> Matcher {
        Matcher {
            any: Regex::new(&self.body()).expect("escaped pattern"),
            exact: Regex::new(&format!("^{}$", self.body())).expect("escaped pattern"),
            fragment: Regex::new(&format!(
                "{}|{}|{}\\d",
                regex::escape(&self.open),
                regex::escape(&self.close),
                regex::escape(&self.stem)
            ))
            .expect("escaped pattern"),
        }
    }
}

pub(crate) struct Matcher {
    any: Regex,
    exact: Regex,
    /// Pieces of a placeholder left behind when a backend mangles one.
    fragment: Regex,
}

impl Matcher {
    /// Placeholder number if `token` is exactly one placeholder.
    pub(crate) fn number(&self, token: &str) -> Option<Result<usize, ()>> {
        self.exact.captures(token).map(|c| c[1].parse().map_err(|_| ()))
    }

    pub(crate) fn is_fragment(&self, token: &str) -> bool {
        self.fragment.is_match(token)
    }
}

/// A sentence with its entity spans locked behind placeholders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationCandidate {
    pub sentence_id: usize,
    pub placeholdered_text: String,
    /// `(placeholder, span)` in textual order; the placeholder number is the index.
    pub placeholder_map: Vec<(String, EntitySpan)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("sentence {0} has no entities")]
    NoEntities(usize),
    #[error("sentence {sentence} token {token:?} already looks like a placeholder")]
    GlyphCollision { sentence: usize, token: String },
}

pub fn placeholder_encode(sentence: &Sentence, fmt: &PlaceholderFormat) -> Result<AugmentationCandidate, EncodeError> {
    if !sentence.has_entities() {
        return Err(EncodeError::NoEntities(sentence.id()));
    }
    let matcher = fmt.matcher();
    let mut words = Vec::with_capacity(sentence.len());
    let mut map = Vec::with_capacity(sentence.spans().len());
    let mut spans = sentence.spans().iter().peekable();
    let mut i = 0;
    while i < sentence.len() {
        if let Some(span) = spans.next_if(|s| s.start == i) {
            let token = fmt.token(map.len());
            words.push(token.clone());
            map.push((token, span.clone()));
            i = span.end;
        } else {
            let text = &sentence.tokens()[i].text;
            if matcher.is_fragment(text) {
                return Err(EncodeError::GlyphCollision {
                    sentence: sentence.id(),
                    token: text.clone(),
                });
            }
            words.push(text.clone());
            i += 1;
        }
    }
    Ok(AugmentationCandidate {
        sentence_id: sentence.id(),
        placeholdered_text: words.join(" "),
        placeholder_map: map,
    })
}

/// Checks placeholder integrity of a round-tripped text and rebuilds a
/// labelled sentence from it.
///
/// Each placeholder must appear exactly once and in its original order. It is
/// replaced by the original entity tokens with their labels; every other
/// whitespace-separated token is labelled `O`.
pub fn verify_and_restore(
    candidate: &AugmentationCandidate,
    roundtrip: &str,
    fmt: &PlaceholderFormat,
) -> Result<Sentence, RejectReason> {
    let matcher = fmt.matcher();
    // A backend may glue punctuation onto a placeholder.
    let spaced = matcher.any.replace_all(roundtrip, " $0 ");
    let k = candidate.placeholder_map.len();
    let mut counts = vec![0usize; k];
    let mut order = Vec::with_capacity(k);
    let mut tokens = Vec::new();
    for raw in spaced.split_whitespace() {
        match matcher.number(raw) {
            Some(Ok(n)) if n < k => {
                counts[n] += 1;
                order.push(n);
                let span = &candidate.placeholder_map[n].1;
                for (j, word) in span.surface.split(' ').enumerate() {
                    let label = if j == 0 {
                        Label::Begin(span.category.clone())
                    } else {
                        Label::Inside(span.category.clone())
                    };
                    tokens.push(Token::new(word, label));
                }
            }
            Some(_) => return Err(RejectReason::EntityMutated),
            None if matcher.is_fragment(raw) => return Err(RejectReason::EntityMutated),
            None => tokens.push(Token::new(raw, Label::Outside)),
        }
    }
    if counts.contains(&0) {
        return Err(RejectReason::PlaceholderLost);
    }
    if counts.iter().any(|&c| c > 1) {
        return Err(RejectReason::PlaceholderDuplicated);
    }
    if order.windows(2).any(|w| w[0] > w[1]) {
        return Err(RejectReason::EntityMutated);
    }
    Sentence::new(candidate.sentence_id, tokens).map_err(|_| RejectReason::EntityMutated)
}
