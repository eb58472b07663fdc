//! Inference-backend contract: extractive QA for stage 1 and generative entity
//! disambiguation for stage 2.
//!
//! Implementations return raw answers; [`qa_extract`] and [`ed_generate`]
//! validate requests and responses, then impose the ranking and `k` cutoff,
//! so every backend (HTTP or mock) goes through the same checks.

mod http;
mod mock;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::BackendError;
use crate::model::MENTION_MARKER;

pub use http::{HealthStatus, HttpBackend, HttpBackendConfig, BACKEND_URL_ENV};
pub use mock::{mock_ed_backend, mock_qa_backend, MockEdBackend, MockQaBackend};

/// An extracted answer span. `start`/`end` are character offsets into the
/// request context, end exclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanAnswer {
    pub text: String,
    pub score: f64,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityGuess {
    pub name: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaRequest {
    pub question: String,
    pub context: String,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdRequest {
    #[serde(rename = "prompt")]
    pub prompt_with_markers: String,
    pub context: String,
    pub k: usize,
}

impl QaRequest {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.k == 0 {
            return Err(BackendError::InvalidRequest("k must be at least 1".into()));
        }
        if !self.question.ends_with('?') {
            return Err(BackendError::InvalidRequest(format!(
                "question must end with '?': {:?}",
                self.question
            )));
        }
        Ok(())
    }
}

impl EdRequest {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.k == 0 {
            return Err(BackendError::InvalidRequest("k must be at least 1".into()));
        }
        if self.prompt_with_markers.matches(MENTION_MARKER).count() != 2 {
            return Err(BackendError::InvalidRequest(format!(
                "prompt must contain two {MENTION_MARKER} markers: {:?}",
                self.prompt_with_markers
            )));
        }
        Ok(())
    }
}

pub trait QaBackend: Send + Sync {
    fn answer(&self, request: &QaRequest) -> Result<Vec<SpanAnswer>, BackendError>;
}

pub trait EdBackend: Send + Sync {
    fn disambiguate(&self, request: &EdRequest) -> Result<Vec<EntityGuess>, BackendError>;
}

impl<T: QaBackend + ?Sized> QaBackend for &T {
    fn answer(&self, request: &QaRequest) -> Result<Vec<SpanAnswer>, BackendError> {
        (**self).answer(request)
    }
}

impl<T: EdBackend + ?Sized> EdBackend for &T {
    fn disambiguate(&self, request: &EdRequest) -> Result<Vec<EntityGuess>, BackendError> {
        (**self).disambiguate(request)
    }
}

pub(crate) fn check_score(score: f64, payload: &str) -> Result<(), BackendError> {
    if score.is_finite() && (0.0..=1.0).contains(&score) {
        Ok(())
    } else {
        Err(BackendError::protocol(format!("score {score} outside [0, 1]"), payload))
    }
}

/// Slices `context` by character offsets.
pub fn char_slice(context: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut indices = context
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(context.len()));
    let from = indices.nth(start)?;
    let to = if end == start {
        from
    } else {
        indices.nth(end - start - 1)?
    };
    Some(&context[from..to])
}

fn score_desc(a: f64, b: f64) -> Ordering {
    b.partial_cmp(&a).unwrap_or(Ordering::Equal)
}

/// Runs a QA request: at most `k` spans, best first, ties by (start, text).
pub fn qa_extract<B: QaBackend + ?Sized>(backend: &B, request: &QaRequest) -> Result<Vec<SpanAnswer>, BackendError> {
    request.validate()?;
    let mut answers = backend.answer(request)?;
    for a in &answers {
        let payload = || serde_json::to_string(a).unwrap_or_default();
        check_score(a.score, &payload())?;
        if char_slice(&request.context, a.start, a.end) != Some(a.text.as_str()) {
            return Err(BackendError::protocol(
                format!("span [{}, {}) does not slice the context to its text", a.start, a.end),
                &payload(),
            ));
        }
    }
    answers.sort_by(|a, b| {
        score_desc(a.score, b.score)
            .then(a.start.cmp(&b.start))
            .then_with(|| a.text.cmp(&b.text))
    });
    answers.truncate(request.k);
    Ok(answers)
}

/// Runs an entity-disambiguation request: at most `k` guesses, best first,
/// ties by name.
pub fn ed_generate<B: EdBackend + ?Sized>(backend: &B, request: &EdRequest) -> Result<Vec<EntityGuess>, BackendError> {
    request.validate()?;
    let mut guesses = backend.disambiguate(request)?;
    for g in &guesses {
        let payload = || serde_json::to_string(g).unwrap_or_default();
        check_score(g.score, &payload())?;
        if g.name.trim().is_empty() {
            return Err(BackendError::protocol("empty entity name", &payload()));
        }
    }
    guesses.sort_by(|a, b| score_desc(a.score, b.score).then_with(|| a.name.cmp(&b.name)));
    guesses.truncate(request.k);
    Ok(guesses)
}
