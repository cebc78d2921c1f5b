use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::placeholder::{Matcher, PlaceholderFormat};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum BackendError {
    #[error("request timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend returned HTTP {0}")]
    Status(u16),
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("no recorded response for {0:?}")]
    CassetteMiss(String),
    #[error("cassette: {0}")]
    Cassette(String),
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("injected failure")]
    Injected,
}

/// A machine translation service.
pub trait TranslationBackend: Send + Sync {
    fn translate(&self, text: &str, source_lang: &str, target_lang: &str) -> Result<String, BackendError>;

    /// Flushes any state (e.g. a recorded cassette). Called once after a run.
    fn finish(&self) -> Result<(), BackendError> {
        Ok(())
    }
}

impl<T: TranslationBackend + ?Sized> TranslationBackend for Box<T> {
    fn translate(&self, text: &str, source_lang: &str, target_lang: &str) -> Result<String, BackendError> {
        (**self).translate(text, source_lang, target_lang)
    }

    fn finish(&self) -> Result<(), BackendError> {
        (**self).finish()
    }
}

impl<T: TranslationBackend + ?Sized> TranslationBackend for &T {
    fn translate(&self, text: &str, source_lang: &str, target_lang: &str) -> Result<String, BackendError> {
        (**self).translate(text, source_lang, target_lang)
    }

    fn finish(&self) -> Result<(), BackendError> {
        (**self).finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockBehavior {
    /// Echo every call.
    Identity,
    /// Rotate non-placeholder tokens and apply the synonym table.
    #[default]
    Paraphrase,
    /// Remove the first placeholder.
    DropPlaceholder,
    /// Repeat the first placeholder.
    DuplicatePlaceholder,
    /// Strip the closing glyph of the first placeholder.
    MangleGlyph,
    /// Fail every call.
    Fail,
    /// Fail the first `n` calls for each distinct text, then behave as `Identity`.
    Flaky(usize),
}

/// One-way so that repeated application is stable.
const SYNONYMS: &[(&str, &str)] = &[
    ("big", "large"),
    ("small", "little"),
    ("said", "stated"),
    ("says", "states"),
    ("buy", "purchase"),
    ("bought", "purchased"),
    ("help", "assist"),
    ("start", "begin"),
    ("quickly", "rapidly"),
    ("today", "now"),
    ("people", "persons"),
    ("show", "display"),
];

/// Offline stand-in for a translation service.
///
/// Calls whose target is the home language (the return leg of a round trip)
/// are echoed. Calls into any other language are transformed according to
/// the behavior. For `Paraphrase`, the `m` non-placeholder tokens are rotated
/// left by `r = 1 + derive_seed(seed, "wom/mock", hash(text)) % (m - 1)`
/// positions within their own slots (placeholders keep their positions), then
/// each token found in the synonym table is replaced. With `m < 2` only the
/// synonym step applies.
pub struct MockBackend {
    behavior: MockBehavior,
    seed: u64,
    home_lang: String,
    matcher: Arc<Matcher>,
    attempts: Mutex<HashMap<String, usize>>,
}

impl MockBackend {
    pub fn new(behavior: MockBehavior, seed: u64) -> Self {
        MockBackend::with_format(behavior, seed, "en", &PlaceholderFormat::default())
    }

    pub fn with_format(behavior: MockBehavior, seed: u64, home_lang: &str, fmt: &PlaceholderFormat) -> Self {
        MockBackend {
            behavior,
            seed,
            home_lang: home_lang.to_string(),
            matcher: fmt.matcher(),
            attempts: Mutex::new(HashMap::new()),
        }
    }

    fn placeholder_positions(&self, words: &[&str]) -> Vec<usize> {
        (0..words.len()).filter(|&i| self.matcher.number(words[i]).is_some()).collect()
    }

    fn paraphrase(&self, text: &str) -> String {
        let words: Vec<&str> = text.split_whitespace().collect();
        let slots: Vec<usize> = (0..words.len()).filter(|&i| self.matcher.number(words[i]).is_none()).collect();
        let m = slots.len();
        let r = if m >= 2 {
            1 + (rng::derive_seed(self.seed, "wom/mock", rng::hash_str(text)) % (m as u64 - 1)) as usize
        } else {
            0
        };
        let mut out: Vec<String> = words.iter().map(|w| w.to_string()).collect();
        for (j, &slot) in slots.iter().enumerate() {
            let word = words[slots[(j + r) % m]];
            out[slot] = SYNONYMS
                .iter()
                .find(|(from, _)| *from == word)
                .map_or(word, |(_, to)| *to)
                .to_string();
        }
        out.join(" ")
    }
}

impl TranslationBackend for MockBackend {
    fn translate(&self, text: &str, _source_lang: &str, target_lang: &str) -> Result<String, BackendError> {
        if let MockBehavior::Flaky(n) = self.behavior {
            let mut attempts = self.attempts.lock().expect("mock lock");
            let seen = attempts.entry(text.to_string()).or_insert(0);
            *seen += 1;
            if *seen <= n {
                return Err(BackendError::Injected);
            }
            return Ok(text.to_string());
        }
        if self.behavior == MockBehavior::Fail {
            return Err(BackendError::Injected);
        }
        if target_lang == self.home_lang {
            return Ok(text.to_string());
        }
        let mut words: Vec<String> = text.split_whitespace().map(str::to_string).collect();
        let first = self.placeholder_positions(&words.iter().map(String::as_str).collect::<Vec<_>>()).first().copied();
        Ok(match (self.behavior, first) {
            (MockBehavior::Paraphrase, _) => self.paraphrase(text),
            (MockBehavior::DropPlaceholder, Some(i)) => {
                words.remove(i);
                words.join(" ")
            }
            (MockBehavior::DuplicatePlaceholder, Some(i)) => {
                let dup = words[i].clone();
                words.push(dup);
                words.join(" ")
            }
            (MockBehavior::MangleGlyph, Some(i)) => {
                let w = &words[i];
                let cut = w.char_indices().last().map_or(0, |(at, _)| at);
                words[i] = w[..cut].to_string();
                words.join(" ")
            }
            _ => text.to_string(),
        })
    }
}

#[derive(Serialize)]
struct HttpRequest<'a> {
    text: &'a str,
    source_lang: &'a str,
    target_lang: &'a str,
}

#[derive(Deserialize)]
struct HttpResponse {
    text: String,
}

/// JSON-over-HTTP translation service: POST `{text, source_lang,
/// target_lang}`, expect `{text}`.
pub struct HttpBackend {
    endpoint: String,
    token_env: Option<String>,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(endpoint: impl Into<String>, token_env: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpBackend {
            endpoint: endpoint.into(),
            token_env,
            agent,
        }
    }
}

impl TranslationBackend for HttpBackend {
    fn translate(&self, text: &str, source_lang: &str, target_lang: &str) -> Result<String, BackendError> {
        let mut request = self.agent.post(&self.endpoint);
        if let Some(var) = &self.token_env {
            let token = std::env::var(var).map_err(|_| BackendError::Config(format!("environment variable {var} is not set")))?;
            request = request.header("Authorization", &format!("Bearer {token}"));
        }
        let body = HttpRequest {
            text,
            source_lang,
            target_lang,
        };
        let mut response = request.send_json(&body).map_err(|e| match e {
            ureq::Error::Timeout(_) => BackendError::Timeout,
            ureq::Error::StatusCode(code) => BackendError::Status(code),
            other => BackendError::Transport(other.to_string()),
        })?;
        let parsed: HttpResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Protocol(e.to_string()))?;
        Ok(parsed.text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub source_lang: String,
    pub target_lang: String,
    pub text: String,
    pub response: String,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct CassetteFile {
    interactions: Vec<Interaction>,
}

type Key = (String, String, String);

/// Record/replay wrapper. Replay serves stored responses only; record
/// forwards misses to the inner backend and writes the cassette on
/// [`TranslationBackend::finish`].
pub struct Cassette {
    path: PathBuf,
    inner: Option<Box<dyn TranslationBackend>>,
    entries: Mutex<BTreeMap<Key, String>>,
}

impl Cassette {
    fn load(path: &Path) -> Result<BTreeMap<Key, String>, BackendError> {
        let raw = fs::read_to_string(path).map_err(|e| BackendError::Cassette(format!("{}: {e}", path.display())))?;
        let file: CassetteFile =
            serde_json::from_str(&raw).map_err(|e| BackendError::Cassette(format!("{}: {e}", path.display())))?;
        Ok(file
            .interactions
            .into_iter()
            .map(|i| ((i.source_lang, i.target_lang, i.text), i.response))
            .collect())
    }

    pub fn replay(path: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let path = path.into();
        let entries = Cassette::load(&path)?;
        Ok(Cassette {
            path,
            inner: None,
            entries: Mutex::new(entries),
        })
    }

    /// Starts from the existing cassette at `path` if there is one.
    pub fn record(path: impl Into<PathBuf>, inner: Box<dyn TranslationBackend>) -> Result<Self, BackendError> {
        let path = path.into();
        let entries = if path.exists() { Cassette::load(&path)? } else { BTreeMap::new() };
        Ok(Cassette {
            path,
            inner: Some(inner),
            entries: Mutex::new(entries),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cassette lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl TranslationBackend for Cassette {
    fn translate(&self, text: &str, source_lang: &str, target_lang: &str) -> Result<String, BackendError> {
        let key = (source_lang.to_string(), target_lang.to_string(), text.to_string());
        if let Some(hit) = self.entries.lock().expect("cassette lock").get(&key) {
            return Ok(hit.clone());
        }
        let inner = self
            .inner
            .as_ref()
            .ok_or_else(|| BackendError::CassetteMiss(format!("{source_lang}->{target_lang}: {text}")))?;
        let response = inner.translate(text, source_lang, target_lang)?;
        self.entries.lock().expect("cassette lock").insert(key, response.clone());
        Ok(response)
    }

    fn finish(&self) -> Result<(), BackendError> {
        let Some(inner) = &self.inner else { return Ok(()) };
        inner.finish()?;
        let interactions = self
            .entries
            .lock()
            .expect("cassette lock")
            .iter()
            .map(|((s, t, text), r)| Interaction {
                source_lang: s.clone(),
                target_lang: t.clone(),
                text: text.clone(),
                response: r.clone(),
            })
            .collect();
        let json = serde_json::to_string_pretty(&CassetteFile { interactions }).expect("cassette serializes");
        fs::write(&self.path, json + "\n").map_err(|e| BackendError::Cassette(format!("{}: {e}", self.path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Call {
    pub text: String,
    pub source_lang: String,
    pub target_lang: String,
}

/// Wraps a backend and records every request it receives.
pub struct CallLog<B> {
    inner: B,
    calls: Mutex<Vec<Call>>,
}

impl<B: TranslationBackend> CallLog<B> {
    pub fn new(inner: B) -> Self {
        CallLog {
            inner,
            calls: Mutex::new(Vec::new()),
        }
    }

    /// Requests in arrival order (not deterministic under concurrency).
    pub fn calls(&self) -> Vec<Call> {
        self.calls.lock().expect("log lock").clone()
    }
}

impl<B: TranslationBackend> TranslationBackend for CallLog<B> {
    fn translate(&self, text: &str, source_lang: &str, target_lang: &str) -> Result<String, BackendError> {
        self.calls.lock().expect("log lock").push(Call {
            text: text.to_string(),
            source_lang: source_lang.to_string(),
            target_lang: target_lang.to_string(),
        });
        self.inner.translate(text, source_lang, target_lang)
    }

    fn finish(&self) -> Result<(), BackendError> {
        self.inner.finish()
    }
}

fn default_timeout() -> u64 {
    30
}

/// Serializable backend selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Mock {
        #[serde(default)]
        behavior: MockBehavior,
    },
    Http {
        endpoint: String,
        #[serde(default)]
        token_env: Option<String>,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
    Replay {
        cassette: PathBuf,
    },
    Record {
        cassette: PathBuf,
        endpoint: String,
        #[serde(default)]
        token_env: Option<String>,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Mock {
            behavior: MockBehavior::Paraphrase,
        }
    }
}

impl BackendConfig {
    pub fn build(
        &self,
        seed: u64,
        home_lang: &str,
        fmt: &PlaceholderFormat,
    ) -> Result<Box<dyn TranslationBackend>, BackendError> {
        Ok(match self {
            BackendConfig::Mock { behavior } => Box::new(MockBackend::with_format(*behavior, seed, home_lang, fmt)),
            BackendConfig::Http {
                endpoint,
                token_env,
                timeout_secs,
            } => Box::new(HttpBackend::new(endpoint, token_env.clone(), Duration::from_secs(*timeout_secs))),
            BackendConfig::Replay { cassette } => Box::new(Cassette::replay(cassette)?),
            BackendConfig::Record {
                cassette,
                endpoint,
                token_env,
                timeout_secs,
            } => {
                let http = HttpBackend::new(endpoint, token_env.clone(), Duration::from_secs(*timeout_secs));
                Box::new(Cassette::record(cassette, Box::new(http))?)
            }
        })
    }
}
