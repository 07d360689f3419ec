use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{BackendError, Completion, FinishReason, Generator, SamplingParams};
use crate::dataset::Query;
use crate::grader::{normalize_text, AnswerValue};
use crate::rng::CounterRng;

/// Per-query success probabilities for the simulated generator.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GeneratorProfile {
    pub seed: u64,
    pub success: BTreeMap<String, f64>,
}

/// One line of a profile JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub query_id: String,
    pub p: f64,
}

impl GeneratorProfile {
    pub fn new(seed: u64) -> Self {
        Self { seed, success: BTreeMap::new() }
    }

    pub fn insert(&mut self, query_id: impl Into<String>, p: f64) {
        self.success.insert(query_id.into(), p);
    }

    pub fn from_entries(seed: u64, entries: impl IntoIterator<Item = ProfileEntry>) -> Self {
        Self {
            seed,
            success: entries.into_iter().map(|e| (e.query_id, e.p)).collect(),
        }
    }
}

const SENTINELS: [&str; 2] = ["\\text{unsolved}", "\\text{undetermined}"];

/// Deterministic stand-in for a sampling model.
///
/// Trial `t` of query `q` is correct iff `u(seed, q, t) < p_q`, so output is
/// independent of batching and worker count.
#[derive(Debug, Clone)]
pub struct SimulatedBackend {
    profile: GeneratorProfile,
}

impl SimulatedBackend {
    pub fn new(profile: GeneratorProfile) -> Self {
        Self { profile }
    }

    pub fn profile(&self) -> &GeneratorProfile {
        &self.profile
    }

    pub fn is_correct_trial(&self, query_id: &str, p: f64, trial: u64) -> bool {
        CounterRng::keyed(self.profile.seed, query_id).bernoulli(trial, p)
    }

    fn distractor(query: &Query) -> String {
        if let Some(v) = query.ground_truth.plus_one() {
            return v.to_string();
        }
        let truth = match &query.ground_truth {
            AnswerValue::Text(t) => normalize_text(t),
            _ => String::new(),
        };
        SENTINELS
            .iter()
            .find(|s| normalize_text(&s.replace("\\text{", "").replace('}', "")) != truth)
            .unwrap_or(&SENTINELS[0])
            .to_string()
    }
}

impl Generator for SimulatedBackend {
    fn generate(
        &self,
        query: &Query,
        _prompt: &str,
        params: &SamplingParams,
        trial_base: u64,
    ) -> Result<Vec<Completion>, BackendError> {
        let p = *self
            .profile
            .success
            .get(&query.id)
            .ok_or_else(|| BackendError::MissingProfile(query.id.clone()))?;
        let rng = CounterRng::keyed(self.profile.seed, &query.id);
        Ok((0..u64::from(params.n))
            .map(|j| {
                let trial = trial_base + j;
                let text = if rng.bernoulli(trial, p) {
                    format!(
                        "Simulated solution to {} (trial {trial}).\nTherefore the final answer is $\\boxed{{{}}}$.",
                        query.id, query.answer
                    )
                } else {
                    format!(
                        "Simulated attempt at {} (trial {trial}).\nSo the answer is $\\boxed{{{}}}$.",
                        query.id,
                        Self::distractor(query)
                    )
                };
                Completion { trial, text, finish: FinishReason::Stop }
            })
            .collect())
    }

    fn prepare(&self, queries: &[Query]) -> Result<(), BackendError> {
        for q in queries {
            match self.profile.success.get(&q.id) {
                None => return Err(BackendError::MissingProfile(q.id.clone())),
                Some(p) if !(0.0..=1.0).contains(p) => {
                    return Err(BackendError::Config(format!("probability {p} for {} outside [0, 1]", q.id)))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }
}
