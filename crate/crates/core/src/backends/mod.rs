//! External services: a text-generation LLM and an emotion classifier.
//!
//! Both are consumed through small traits so the evolutionary loop can run
//! against live HTTP endpoints or against the deterministic mocks in
//! [`mock`].

mod classifier;
pub mod mock;
mod ollama;

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{EmotionScores, GeneratedText};

pub use classifier::{parse_scores, HttpClassifier, ResponseFormat};
pub use ollama::OllamaClient;

/// Tokens the classifier accepts per input.
pub const CLASSIFIER_TOKEN_LIMIT: usize = 512;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("server returned status {0}")]
    Status(u16),
    #[error("malformed response: {0}")]
    Parse(String),
    #[error("{what} failed after {attempts} attempts: {last}")]
    Exhausted {
        what: &'static str,
        attempts: u32,
        last: Box<BackendError>,
    },
}

/// One completion request. Defaults follow the experimental setup:
/// temperature 0.7 and a 512-token context window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub model_name: String,
    pub system: String,
    pub prompt_body: String,
    pub temperature: f64,
    pub context_window: u32,
    pub max_output_tokens: u32,
    pub stop_sequences: Vec<String>,
    /// Sampling seed. Mocks always honour it; live servers only when the
    /// client is configured to forward it.
    pub seed: Option<u64>,
}

impl Default for GenerationRequest {
    fn default() -> Self {
        GenerationRequest {
            model_name: "llama2".to_string(),
            system: String::new(),
            prompt_body: String::new(),
            temperature: 0.7,
            context_window: 512,
            max_output_tokens: 256,
            stop_sequences: Vec::new(),
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendPolicy {
    #[serde(rename = "timeout_ms", with = "crate::serde_ext::duration_ms")]
    pub timeout: Duration,
    pub max_retries: u32,
    /// Base delay; attempt `n` waits `backoff * 2^n` before retrying.
    #[serde(rename = "backoff_ms", with = "crate::serde_ext::duration_ms")]
    pub backoff: Duration,
    pub max_concurrent_requests: usize,
}

impl Default for BackendPolicy {
    fn default() -> Self {
        BackendPolicy {
            timeout: Duration::from_secs(120),
            max_retries: 3,
            backoff: Duration::from_millis(500),
            max_concurrent_requests: 4,
        }
    }
}

impl BackendPolicy {
    /// Runs `op` until it succeeds or `max_retries + 1` attempts have failed.
    pub fn retry<T>(
        &self,
        what: &'static str,
        mut op: impl FnMut() -> Result<T, BackendError>,
    ) -> Result<T, BackendError> {
        let mut attempt = 0u32;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if attempt >= self.max_retries => {
                    return Err(BackendError::Exhausted {
                        what,
                        attempts: attempt + 1,
                        last: Box::new(e),
                    })
                }
                Err(e) => {
                    log::warn!("{what} attempt {} failed: {e}", attempt + 1);
                    let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
                    thread::sleep(self.backoff.saturating_mul(factor));
                    attempt += 1;
                }
            }
        }
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
pub struct Throttle {
    limit: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a>(&'a Throttle);

impl Throttle {
    pub fn new(limit: usize) -> Self {
        Throttle {
            limit: limit.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.limit {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

pub trait TextGenerator: Send + Sync {
    fn complete(&self, request: &GenerationRequest) -> Result<String, BackendError>;
}

pub trait EmotionClassifier: Send + Sync {
    fn classify(&self, text: &GeneratedText) -> Result<EmotionScores, BackendError>;
}

/// Estimated subword tokens in `text`: whitespace words × 1.3.
pub fn estimate_tokens(text: &str) -> usize {
    (text.split_whitespace().count() as f64 * 1.3).ceil() as usize
}

/// Keeps the longest prefix of whole words whose estimated token count fits
/// `budget`. Returns the text and whether it was cut.
pub fn truncate_to_token_budget(text: &str, budget: usize) -> (String, bool) {
    if estimate_tokens(text) <= budget {
        return (text.to_string(), false);
    }
    let max_words = (budget as f64 / 1.3).floor() as usize;
    let mut end = 0;
    for (count, (start, word)) in word_spans(text).enumerate() {
        if count == max_words {
            break;
        }
        end = start + word.len();
    }
    (text[..end].to_string(), true)
}

fn word_spans(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split_whitespace()
        .map(move |w| (w.as_ptr() as usize - text.as_ptr() as usize, w))
}
