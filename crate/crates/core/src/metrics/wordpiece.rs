//! Subword segmentation used for the segmentation-rate feature.

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::Path;

/// Words longer than this (in chars) are a single unknown piece, as in BERT.
const MAX_INPUT_CHARS: usize = 100;

/// Alphabetic runs longer than this are chunked by the fallback splitter.
const FALLBACK_CHUNK: usize = 8;

#[derive(Debug, Clone, Default)]
pub struct WordPieceVocab {
    pieces: HashSet<String>,
}

impl WordPieceVocab {
    pub fn new<I, S>(pieces: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        WordPieceVocab {
            pieces: pieces.into_iter().map(Into::into).collect(),
        }
    }

    /// Reads a `vocab.txt` with one piece per line.
    pub fn from_file(path: impl AsRef<Path>) -> io::Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(WordPieceVocab::new(
            text.lines()
                .map(|l| l.trim_end_matches('\r'))
                .filter(|l| !l.is_empty()),
        ))
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Greedy longest-match-first segmentation; returns the pieces, or `None`
    /// when the word cannot be covered (it is then one unknown piece).
    pub fn tokenize(&self, word: &str) -> Option<Vec<String>> {
        let chars: Vec<char> = word.chars().collect();
        if chars.is_empty() || chars.len() > MAX_INPUT_CHARS {
            return None;
        }
        let mut out = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while start < end {
                let mut candidate: String = chars[start..end].iter().collect();
                if start > 0 {
                    candidate.insert_str(0, "##");
                }
                if self.pieces.contains(&candidate) {
                    found = Some(candidate);
                    break;
                }
                end -= 1;
            }
            out.push(found?);
            start = end;
        }
        Some(out)
    }

    pub fn piece_count(&self, word: &str) -> usize {
        self.tokenize(word).map_or(1, |p| p.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CharClass {
    Alpha,
    Digit,
    Punct,
    Other,
}

fn classify(c: char) -> CharClass {
    if c.is_alphabetic() {
        CharClass::Alpha
    } else if c.is_numeric() {
        CharClass::Digit
    } else if c.is_ascii_punctuation()
        || ('\u{2000}'..='\u{206F}').contains(&c)
        || ('\u{3000}'..='\u{303F}').contains(&c)
    {
        CharClass::Punct
    } else {
        CharClass::Other
    }
}

/// Approximate piece count without a vocabulary: split at letter/digit/
/// punctuation boundaries, every punctuation char is its own piece, and
/// alphabetic runs are cut into chunks of 8 chars.
pub fn heuristic_piece_count(word: &str) -> usize {
    let mut count = 0;
    let mut run_class: Option<CharClass> = None;
    let mut run_len = 0usize;
    let finish = |class: Option<CharClass>, len: usize| -> usize {
        match class {
            None => 0,
            Some(CharClass::Alpha) => len.div_ceil(FALLBACK_CHUNK),
            Some(CharClass::Punct) => len,
            Some(_) => 1,
        }
    };
    for c in word.chars() {
        let class = classify(c);
        if Some(class) == run_class {
            run_len += 1;
        } else {
            count += finish(run_class, run_len);
            run_class = Some(class);
            run_len = 1;
        }
    }
    count += finish(run_class, run_len);
    count.max(1)
}

/// Segmenter used for the segmentation rate.
#[derive(Debug, Clone)]
pub enum Segmenter {
    WordPiece(WordPieceVocab),
    Heuristic,
}

impl Segmenter {
    pub fn piece_count(&self, word: &str) -> usize {
        match self {
            Segmenter::WordPiece(vocab) => vocab.piece_count(word),
            Segmenter::Heuristic => heuristic_piece_count(word),
        }
    }
}
