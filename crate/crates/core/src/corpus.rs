//! BIO-labelled NER corpora: parsing, validation, span extraction and writing.
//!
//! The on-disk format is the CoNLL-style one used by the WNUT releases: one
//! token per line, the label in the last whitespace-separated column, and a
//! blank line between sentences. `-DOCSTART-` lines are skipped.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: BIO violation: {label} follows {previous}")]
    Bio {
        line: usize,
        label: String,
        previous: String,
    },
    #[error("sentence {sentence}: {message}")]
    InvalidSentence { sentence: usize, message: String },
    #[error("corpus is empty")]
    Empty,
    #[error("invalid label {0:?}")]
    Label(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A BIO tag.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Label {
    Outside,
    Begin(String),
    Inside(String),
}

impl Label {
    pub fn begin(category: impl Into<String>) -> Self {
        Label::Begin(category.into())
    }

    pub fn inside(category: impl Into<String>) -> Self {
        Label::Inside(category.into())
    }

    pub fn is_entity(&self) -> bool {
        !matches!(self, Label::Outside)
    }

    pub fn category(&self) -> Option<&str> {
        match self {
            Label::Outside => None,
            Label::Begin(c) | Label::Inside(c) => Some(c),
        }
    }
}

impl FromStr for Label {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "O" {
            return Ok(Label::Outside);
        }
        let (prefix, category) = s
            .split_once('-')
            .ok_or_else(|| CorpusError::Label(s.to_string()))?;
        if category.is_empty() || category.chars().any(char::is_whitespace) {
            return Err(CorpusError::Label(s.to_string()));
        }
        match prefix {
            "B" => Ok(Label::Begin(category.to_string())),
            "I" => Ok(Label::Inside(category.to_string())),
            _ => Err(CorpusError::Label(s.to_string())),
        }
    }
}

impl TryFrom<String> for Label {
    type Error = CorpusError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<Label> for String {
    fn from(label: Label) -> Self {
        label.to_string()
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Outside => f.write_str("O"),
            Label::Begin(c) => write!(f, "B-{c}"),
            Label::Inside(c) => write!(f, "I-{c}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub label: Label,
}

impl Token {
    pub fn new(text: impl Into<String>, label: Label) -> Self {
        Token {
            text: text.into(),
            label,
        }
    }
}

/// A maximal run of `B-X I-X ...` tokens inside one sentence; `end` is exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntitySpan {
    pub sentence_id: usize,
    pub start: usize,
    pub end: usize,
    pub category: String,
    pub surface: String,
}

impl EntitySpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// How orphan `I-` tags are handled while parsing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairPolicy {
    /// Any BIO violation is an error.
    Strict,
    /// An `I-X` that does not continue an `X` entity becomes `B-X`.
    #[default]
    Coerce,
}

/// Index of the first label that is an `I-X` not continuing an `X` entity.
pub fn first_bio_violation(labels: &[Label]) -> Option<usize> {
    let mut previous: Option<&Label> = None;
    for (i, label) in labels.iter().enumerate() {
        if let Label::Inside(cat) = label {
            let continues = previous
                .and_then(Label::category)
                .is_some_and(|p| p == cat);
            if !continues {
                return Some(i);
            }
        }
        previous = Some(label);
    }
    None
}

/// Rewrites orphan `I-X` tags to `B-X` and returns how many were changed.
pub fn coerce_labels(labels: &mut [Label]) -> usize {
    let mut repairs = 0;
    for i in 0..labels.len() {
        if let Label::Inside(cat) = &labels[i] {
            let continues = i > 0 && labels[i - 1].category() == Some(cat.as_str());
            if !continues {
                labels[i] = Label::Begin(cat.clone());
                repairs += 1;
            }
        }
    }
    repairs
}

/// Extracts the entity spans of a BIO-valid label sequence.
///
/// A span opens at every `B-X` and extends over the following `I-X` tokens.
pub fn extract_spans(sentence_id: usize, tokens: &[Token]) -> Vec<EntitySpan> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, &str)> = None;
    let close = |spans: &mut Vec<EntitySpan>, start: usize, end: usize, category: &str| {
        let surface = tokens[start..end]
            .iter()
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        spans.push(EntitySpan {
            sentence_id,
            start,
            end,
            category: category.to_string(),
            surface,
        });
    };
    for (i, token) in tokens.iter().enumerate() {
        match &token.label {
            Label::Outside => {
                if let Some((start, cat)) = open.take() {
                    close(&mut spans, start, i, cat);
                }
            }
            Label::Begin(cat) => {
                if let Some((start, prev)) = open.take() {
                    close(&mut spans, start, i, prev);
                }
                open = Some((i, cat));
            }
            Label::Inside(cat) => match open {
                Some((_, prev)) if prev == cat => {}
                _ => {
                    // Orphan I-: treat as an opening tag so the result is still total.
                    if let Some((start, prev)) = open.take() {
                        close(&mut spans, start, i, prev);
                    }
                    open = Some((i, cat));
                }
            },
        }
    }
    if let Some((start, cat)) = open {
        close(&mut spans, start, tokens.len(), cat);
    }
    spans
}

/// Rebuilds a label sequence of length `len` from spans.
pub fn labels_from_spans(len: usize, spans: &[EntitySpan]) -> Vec<Label> {
    let mut labels = vec![Label::Outside; len];
    for span in spans {
        labels[span.start] = Label::Begin(span.category.clone());
        for label in &mut labels[span.start + 1..span.end] {
            *label = Label::Inside(span.category.clone());
        }
    }
    labels
}

/// A non-empty, BIO-valid token sequence with its derived spans.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SentenceRepr", into = "SentenceRepr")]
pub struct Sentence {
    id: usize,
    tokens: Vec<Token>,
    spans: Vec<EntitySpan>,
}

#[derive(Serialize, Deserialize)]
struct SentenceRepr {
    id: usize,
    tokens: Vec<Token>,
}

impl TryFrom<SentenceRepr> for Sentence {
    type Error = CorpusError;

    fn try_from(repr: SentenceRepr) -> Result<Self, Self::Error> {
        Sentence::new(repr.id, repr.tokens)
    }
}

impl From<Sentence> for SentenceRepr {
    fn from(s: Sentence) -> Self {
        SentenceRepr {
            id: s.id,
            tokens: s.tokens,
        }
    }
}

impl Sentence {
    /// Validates tokens and BIO structure.
    pub fn new(id: usize, tokens: Vec<Token>) -> Result<Self, CorpusError> {
        if tokens.is_empty() {
            return Err(CorpusError::InvalidSentence {
                sentence: id,
                message: "sentence has no tokens".into(),
            });
        }
        for (i, token) in tokens.iter().enumerate() {
            if token.text.is_empty() || token.text.chars().any(char::is_whitespace) {
                return Err(CorpusError::InvalidSentence {
                    sentence: id,
                    message: format!("token {i} ({:?}) is empty or contains whitespace", token.text),
                });
            }
        }
        let labels: Vec<Label> = tokens.iter().map(|t| t.label.clone()).collect();
        if let Some(i) = first_bio_violation(&labels) {
            return Err(CorpusError::InvalidSentence {
                sentence: id,
                message: format!(
                    "BIO violation at token {i}: {} follows {}",
                    labels[i],
                    if i == 0 { "sentence start".to_string() } else { labels[i - 1].to_string() }
                ),
            });
        }
        let spans = extract_spans(id, &tokens);
        Ok(Sentence { id, tokens, spans })
    }

    /// Builds a sentence after coercing orphan `I-` tags; returns the repair count.
    pub fn coerced(id: usize, mut tokens: Vec<Token>) -> Result<(Self, usize), CorpusError> {
        let mut labels: Vec<Label> = tokens.iter().map(|t| t.label.clone()).collect();
        let repairs = coerce_labels(&mut labels);
        for (token, label) in tokens.iter_mut().zip(labels) {
            token.label = label;
        }
        Ok((Sentence::new(id, tokens)?, repairs))
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn spans(&self) -> &[EntitySpan] {
        &self.spans
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn entity_token_count(&self) -> usize {
        self.tokens.iter().filter(|t| t.label.is_entity()).count()
    }

    pub fn has_entities(&self) -> bool {
        !self.spans.is_empty()
    }

    /// The same tokens under a new id.
    pub fn with_id(&self, id: usize) -> Sentence {
        let spans = self
            .spans
            .iter()
            .cloned()
            .map(|mut s| {
                s.sentence_id = id;
                s
            })
            .collect();
        Sentence {
            id,
            tokens: self.tokens.clone(),
            spans,
        }
    }

    /// Equality of content (texts and labels), ignoring the id.
    pub fn same_content(&self, other: &Sentence) -> bool {
        self.tokens == other.tokens
    }

    pub fn text(&self) -> String {
        self.tokens
            .iter()
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// An ordered collection of sentences with contiguous ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    sentences: Vec<Sentence>,
    categories: BTreeSet<String>,
    source_path: String,
}

impl Corpus {
    /// Builds a corpus, renumbering sentence ids to `0..n`.
    pub fn from_sentences(sentences: impl IntoIterator<Item = Sentence>, source_path: impl Into<String>) -> Self {
        let sentences: Vec<Sentence> = sentences
            .into_iter()
            .enumerate()
            .map(|(i, s)| if s.id == i { s } else { s.with_id(i) })
            .collect();
        let categories = sentences
            .iter()
            .flat_map(|s| s.spans.iter().map(|sp| sp.category.clone()))
            .collect();
        Corpus {
            sentences,
            categories,
            source_path: source_path.into(),
        }
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn categories(&self) -> &BTreeSet<String> {
        &self.categories
    }

    pub fn source_path(&self) -> &str {
        &self.source_path
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    pub fn spans(&self) -> impl Iterator<Item = &EntitySpan> {
        self.sentences.iter().flat_map(|s| s.spans.iter())
    }

    /// Sub-corpus of the given sentence ids, in corpus order.
    pub fn select(&self, ids: &[usize]) -> Corpus {
        let mut ids = ids.to_vec();
        ids.sort_unstable();
        ids.dedup();
        Corpus::from_sentences(
            ids.into_iter().filter_map(|i| self.sentences.get(i).cloned()),
            self.source_path.clone(),
        )
    }
}

/// Result of parsing: the corpus plus how many labels were coerced.
#[derive(Debug, Clone)]
pub struct Parsed {
    pub corpus: Corpus,
    pub repairs: usize,
}

/// Parses CoNLL text. The last column of each line is the label; any
/// preceding columns are joined with `_` into the token text.
pub fn parse_conll<R: BufRead>(input: R, policy: RepairPolicy) -> Result<Parsed, CorpusError> {
    parse_conll_named(input, policy, "")
}

pub fn parse_conll_named<R: BufRead>(
    input: R,
    policy: RepairPolicy,
    source_path: &str,
) -> Result<Parsed, CorpusError> {
    let mut sentences = Vec::new();
    let mut repairs = 0;
    let mut tokens: Vec<Token> = Vec::new();
    let mut first_line = 0;

    let mut flush = |tokens: &mut Vec<Token>, first_line: usize, sentences: &mut Vec<Sentence>| -> Result<(), CorpusError> {
        if tokens.is_empty() {
            return Ok(());
        }
        let id = sentences.len();
        let taken = std::mem::take(tokens);
        let sentence = match policy {
            RepairPolicy::Strict => {
                let labels: Vec<Label> = taken.iter().map(|t| t.label.clone()).collect();
                if let Some(i) = first_bio_violation(&labels) {
                    return Err(CorpusError::Bio {
                        line: first_line + i,
                        label: labels[i].to_string(),
                        previous: if i == 0 { "sentence start".into() } else { labels[i - 1].to_string() },
                    });
                }
                Sentence::new(id, taken)?
            }
            RepairPolicy::Coerce => {
                let (s, r) = Sentence::coerced(id, taken)?;
                repairs += r;
                s
            }
        };
        sentences.push(sentence);
        Ok(())
    };

    for (index, line) in input.lines().enumerate() {
        let line_no = index + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        let trimmed = line.trim();
        if trimmed.is_empty() {
            flush(&mut tokens, first_line, &mut sentences)?;
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields[0] == "-DOCSTART-" {
            continue;
        }
        if fields.len() < 2 {
            return Err(CorpusError::Parse {
                line: line_no,
                message: format!("expected `token label`, found {} field", fields.len()),
            });
        }
        let (label, text) = fields.split_last().expect("at least two fields");
        let label: Label = label.parse().map_err(|_| CorpusError::Parse {
            line: line_no,
            message: format!("invalid BIO label {label:?}"),
        })?;
        if tokens.is_empty() {
            first_line = line_no;
        }
        tokens.push(Token::new(text.join("_"), label));
    }
    flush(&mut tokens, first_line, &mut sentences)?;

    if sentences.is_empty() {
        return Err(CorpusError::Empty);
    }
    Ok(Parsed {
        corpus: Corpus::from_sentences(sentences, source_path),
        repairs,
    })
}

pub fn read_conll_file(path: impl AsRef<Path>, policy: RepairPolicy) -> Result<Parsed, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path)?;
    parse_conll_named(BufReader::new(file), policy, &path.display().to_string())
}

/// Writes `token<TAB>label` lines with a blank line after every sentence.
pub fn write_conll<W: Write>(corpus: &Corpus, mut output: W) -> Result<(), CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::Empty);
    }
    for sentence in corpus.sentences() {
        for token in sentence.tokens() {
            writeln!(output, "{}\t{}", token.text, token.label)?;
        }
        writeln!(output)?;
    }
    output.flush()?;
    Ok(())
}

pub fn write_conll_file(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let file = File::create(path)?;
    write_conll(corpus, io::BufWriter::new(file))
}

pub fn to_conll_string(corpus: &Corpus) -> Result<String, CorpusError> {
    let mut buf = Vec::new();
    write_conll(corpus, &mut buf)?;
    Ok(String::from_utf8(buf).expect("token texts are UTF-8"))
}
