//! Text-generation backends for the main model and the study assistant.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::http::{HttpSettings, JsonClient};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub max_tokens: u32,
    pub temperature: f64,
    #[serde(default)]
    pub stop_sequences: Vec<String>,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            max_tokens: 512,
            temperature: 0.0,
            stop_sequences: Vec::new(),
        }
    }
}

pub trait Backend: Send + Sync {
    /// Identifier recorded in run reports.
    fn id(&self) -> String;

    fn complete(&self, prompt: &str, params: &GenParams) -> Result<String>;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn id(&self) -> String {
        (**self).id()
    }

    fn complete(&self, prompt: &str, params: &GenParams) -> Result<String> {
        (**self).complete(prompt, params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchKind {
    Exact,
    Substring,
    Prefix,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedRule {
    #[serde(rename = "match")]
    pub kind: MatchKind,
    pub pattern: String,
    pub reply: String,
    #[serde(default)]
    pub priority: i64,
}

impl ScriptedRule {
    pub fn new(
        kind: MatchKind,
        pattern: impl Into<String>,
        reply: impl Into<String>,
        priority: i64,
    ) -> Self {
        Self {
            kind,
            pattern: pattern.into(),
            reply: reply.into(),
            priority,
        }
    }

    pub fn matches(&self, prompt: &str) -> bool {
        match self.kind {
            MatchKind::Exact => prompt == self.pattern,
            MatchKind::Substring => prompt.contains(&self.pattern),
            MatchKind::Prefix => prompt.starts_with(&self.pattern),
        }
    }
}

/// Rule file shape: `{"rules": [...], "default": text | null}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ruleset {
    pub rules: Vec<ScriptedRule>,
    #[serde(default)]
    pub default: Option<String>,
}

/// Deterministic backend: the highest-priority matching rule replies, the
/// first defined winning among equal priorities.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    name: String,
    // Sorted by descending priority; the sort is stable so definition order
    // breaks ties.
    rules: Vec<ScriptedRule>,
    default: Option<String>,
}

impl ScriptedBackend {
    pub fn new(ruleset: Ruleset) -> Self {
        Self::named("scripted", ruleset)
    }

    pub fn named(name: impl Into<String>, ruleset: Ruleset) -> Self {
        let mut rules = ruleset.rules;
        rules.sort_by_key(|r| std::cmp::Reverse(r.priority));
        Self {
            name: name.into(),
            rules,
            default: ruleset.default,
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ruleset: Ruleset = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(Self::named(format!("scripted:{}", path.display()), ruleset))
    }

    pub fn select(&self, prompt: &str) -> Option<&ScriptedRule> {
        self.rules.iter().find(|r| r.matches(prompt))
    }
}

impl Backend for ScriptedBackend {
    fn id(&self) -> String {
        self.name.clone()
    }

    fn complete(&self, prompt: &str, _params: &GenParams) -> Result<String> {
        if prompt.is_empty() {
            return Err(Error::Config("empty prompt".into()));
        }
        match self.select(prompt) {
            Some(rule) => Ok(rule.reply.clone()),
            None => self.default.clone().ok_or(Error::NoRule),
        }
    }
}

/// Wraps a backend and counts calls.
pub struct Counted<B> {
    inner: B,
    calls: AtomicUsize,
}

impl<B: Backend> Counted<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<B: Backend> Backend for Counted<B> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn complete(&self, prompt: &str, params: &GenParams) -> Result<String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(prompt, params)
    }
}

/// Chat-completion client: `POST {base}/chat/completions`, reading
/// `choices[0].message.content`.
pub struct RemoteBackend {
    client: JsonClient,
    model: String,
}

impl RemoteBackend {
    pub fn new(settings: HttpSettings, model: impl Into<String>) -> Result<Self> {
        Ok(Self {
            client: JsonClient::new(settings)?,
            model: model.into(),
        })
    }

    pub fn request_body(&self, prompt: &str, params: &GenParams) -> Value {
        let mut body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        });
        if !params.stop_sequences.is_empty() {
            body["stop"] = json!(params.stop_sequences);
        }
        body
    }
}

impl Backend for RemoteBackend {
    fn id(&self) -> String {
        format!("remote:{}@{}", self.model, self.client.base_url())
    }

    fn complete(&self, prompt: &str, params: &GenParams) -> Result<String> {
        if prompt.is_empty() {
            return Err(Error::Config("empty prompt".into()));
        }
        let resp = self
            .client
            .post("chat/completions", &self.request_body(prompt, params))?;
        resp.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| {
                Error::ProviderUnavailable("response lacks choices[0].message.content".into())
            })
    }
}
