//! Sources of sampled responses.

mod http;
mod prompt;
mod sim;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Query;

pub use http::{HttpBackend, HttpConfig, RetryPolicy};
pub use prompt::{render_prompt, MissingPlaceholder, PromptTemplate, DEFAULT_TEMPLATE, QUERY_PLACEHOLDER};
pub use sim::{GeneratorProfile, ProfileEntry, SimulatedBackend};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    /// Samples per call.
    pub n: u32,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            temperature: 1.6,
            top_p: 0.95,
            max_tokens: 2048,
            n: 1,
        }
    }
}

impl SamplingParams {
    pub fn with_n(self, n: u32) -> Self {
        Self { n, ..self }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(BackendError::Config(format!("temperature {} must be >= 0", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(BackendError::Config(format!("top_p {} must be in (0, 1]", self.top_p)));
        }
        if self.max_tokens == 0 || self.n == 0 {
            return Err(BackendError::Config("max_tokens and n must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    /// Hit the token limit; graded like any other response.
    Length,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub trial: u64,
    pub text: String,
    pub finish: FinishReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("transport failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed backend response: {0}")]
    Protocol(String),
    #[error("no success probability for query {0:?}")]
    MissingProfile(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

/// Produces `params.n` completions for trials `trial_base .. trial_base + n`.
pub trait Generator: Send + Sync {
    fn generate(
        &self,
        query: &Query,
        prompt: &str,
        params: &SamplingParams,
        trial_base: u64,
    ) -> Result<Vec<Completion>, BackendError>;

    /// Checks that every query can be served, before any sampling starts.
    fn prepare(&self, _queries: &[Query]) -> Result<(), BackendError> {
        Ok(())
    }
}

impl<G: Generator + ?Sized> Generator for &G {
    fn generate(
        &self,
        query: &Query,
        prompt: &str,
        params: &SamplingParams,
        trial_base: u64,
    ) -> Result<Vec<Completion>, BackendError> {
        (**self).generate(query, prompt, params, trial_base)
    }

    fn prepare(&self, queries: &[Query]) -> Result<(), BackendError> {
        (**self).prepare(queries)
    }
}

impl<G: Generator + ?Sized> Generator for Box<G> {
    fn generate(
        &self,
        query: &Query,
        prompt: &str,
        params: &SamplingParams,
        trial_base: u64,
    ) -> Result<Vec<Completion>, BackendError> {
        (**self).generate(query, prompt, params, trial_base)
    }

    fn prepare(&self, queries: &[Query]) -> Result<(), BackendError> {
        (**self).prepare(queries)
    }
}
