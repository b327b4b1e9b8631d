use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::encoding::TokenMatrix;
use crate::error::{Error, Result};

/// A labelled block of visual tokens passed to the language model.
#[derive(Debug, Clone, Copy)]
pub struct VisualBlock<'a> {
    pub label: &'a str,
    pub tokens: &'a TokenMatrix,
}

/// Text generation conditioned on visual blocks. Backends are stateless per
/// call; text embedding is their business.
pub trait LanguageBackend: Send + Sync {
    fn generate(&self, blocks: &[VisualBlock<'_>], prompt: &str) -> Result<String>;

    /// Upper bound on concurrent `generate` calls the runner may issue.
    fn max_concurrency(&self) -> usize {
        usize::MAX
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureRule {
    /// Regular expression searched for in the prompt.
    pub pattern: String,
    pub reply: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MockFixtures {
    pub rules: Vec<FixtureRule>,
    #[serde(default)]
    pub default_reply: String,
}

/// What a mock saw on one call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockCall {
    pub prompt: String,
    /// `(label, token rows)` per block.
    pub blocks: Vec<(String, usize)>,
}

/// Replies from a fixture table; the first rule whose pattern matches the
/// prompt wins, otherwise the default reply.
#[derive(Debug)]
pub struct MockBackend {
    rules: Vec<(Regex, String)>,
    default_reply: String,
    calls: AtomicUsize,
    log: Mutex<Vec<MockCall>>,
}

impl MockBackend {
    pub fn new(fixtures: &MockFixtures) -> Result<Self> {
        let rules = fixtures
            .rules
            .iter()
            .map(|r| {
                Regex::new(&r.pattern)
                    .map(|re| (re, r.reply.clone()))
                    .map_err(|e| Error::argument(format!("fixture pattern {:?}: {e}", r.pattern)))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            rules,
            default_reply: fixtures.default_reply.clone(),
            calls: AtomicUsize::new(0),
            log: Mutex::new(Vec::new()),
        })
    }

    /// A mock that always gives the same reply.
    pub fn constant(reply: impl Into<String>) -> Self {
        Self::new(&MockFixtures {
            rules: Vec::new(),
            default_reply: reply.into(),
        })
        .expect("no patterns to compile")
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn calls(&self) -> Vec<MockCall> {
        self.log.lock().map(|l| l.clone()).unwrap_or_default()
    }
}

impl LanguageBackend for MockBackend {
    fn generate(&self, blocks: &[VisualBlock<'_>], prompt: &str) -> Result<String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if let Ok(mut log) = self.log.lock() {
            log.push(MockCall {
                prompt: prompt.to_owned(),
                blocks: blocks
                    .iter()
                    .map(|b| (b.label.to_owned(), b.tokens.len()))
                    .collect(),
            });
        }
        let reply = self
            .rules
            .iter()
            .find(|(re, _)| re.is_match(prompt))
            .map_or(&self.default_reply, |(_, r)| r);
        Ok(reply.clone())
    }
}
