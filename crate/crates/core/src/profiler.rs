//! Fail-rate estimation and pass@k.

use num_rational::Ratio;
use num_traits::{Float, FromPrimitive, Num};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, Generator, PromptTemplate, SamplingParams};
use crate::dataset::Query;
use crate::grader::{grade_response, GradeOutcome, GraderConfig};
use crate::DomainError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyRecord {
    pub query_id: String,
    pub n_sampled: u64,
    pub n_correct: u64,
    pub fail_rate: f64,
}

impl DifficultyRecord {
    pub fn new(query_id: impl Into<String>, n_sampled: u64, n_correct: u64) -> Result<Self, DomainError> {
        if n_sampled == 0 || n_correct > n_sampled {
            return Err(DomainError(format!(
                "need 0 <= n_correct <= n_sampled and n_sampled >= 1, got {n_correct}/{n_sampled}"
            )));
        }
        let exact = Ratio::new(n_sampled - n_correct, n_sampled);
        Ok(Self {
            query_id: query_id.into(),
            n_sampled,
            n_correct,
            fail_rate: ratio_to_f64(exact),
        })
    }

    pub fn fail_rate_exact(&self) -> Ratio<u64> {
        Ratio::new(self.n_sampled - self.n_correct, self.n_sampled)
    }

    /// Planning-time success probability.
    pub fn success_prob(&self) -> f64 {
        ratio_to_f64(Ratio::new(self.n_correct, self.n_sampled))
    }

    /// Rejects records whose stored rate disagrees with their counts.
    pub fn validate(&self) -> Result<(), DomainError> {
        let fresh = Self::new(self.query_id.clone(), self.n_sampled, self.n_correct)?;
        if fresh.fail_rate != self.fail_rate {
            return Err(DomainError(format!(
                "{}: fail_rate {} does not match counts ({})",
                self.query_id, self.fail_rate, fresh.fail_rate
            )));
        }
        Ok(())
    }
}

fn ratio_to_f64(r: Ratio<u64>) -> f64 {
    // numerators here stay far below 2^53
    *r.numer() as f64 / *r.denom() as f64
}

/// A correct response kept from profiling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PooledResponse {
    pub trial: u64,
    pub response: String,
}

/// Everything profiling learned about one query, reusable by synthesis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfilePool {
    pub query_id: String,
    /// Trials `0..n_sampled` were drawn.
    pub n_sampled: u64,
    pub correct: Vec<PooledResponse>,
    #[serde(default)]
    pub indeterminate: Vec<u64>,
}

impl ProfilePool {
    pub fn record(&self) -> DifficultyRecord {
        DifficultyRecord::new(self.query_id.clone(), self.n_sampled, self.correct.len() as u64)
            .expect("pool invariants hold")
    }
}

/// Samples `n_d` responses in calls of at most `batch` and grades each one.
pub fn estimate_fail_rate<G: Generator + ?Sized>(
    query: &Query,
    backend: &G,
    grader: &GraderConfig,
    template: &PromptTemplate,
    params: &SamplingParams,
    n_d: u64,
    batch: u32,
) -> Result<(DifficultyRecord, ProfilePool), ProfileError> {
    if n_d == 0 || batch == 0 {
        return Err(DomainError("n_d and batch must be positive".into()).into());
    }
    let prompt = template.render(&query.problem).map_err(|e| DomainError(e.to_string()))?;
    let mut pool = ProfilePool {
        query_id: query.id.clone(),
        n_sampled: n_d,
        correct: Vec::new(),
        indeterminate: Vec::new(),
    };
    let mut next = 0u64;
    while next < n_d {
        let n = (n_d - next).min(u64::from(batch)) as u32;
        let completions = backend.generate(query, &prompt, &params.with_n(n), next)?;
        if completions.len() != n as usize {
            return Err(BackendError::Protocol(format!("asked for {n} completions, got {}", completions.len())).into());
        }
        for c in completions {
            let g = grade_response(&c.text, &query.ground_truth, grader);
            if g.correct {
                pool.correct.push(PooledResponse { trial: c.trial, response: c.text });
            } else if g.outcome == GradeOutcome::Indeterminate {
                pool.indeterminate.push(c.trial);
            }
        }
        next += u64::from(n);
    }
    Ok((pool.record(), pool))
}

/// Profiles every query on a pool of `workers` threads, preserving input order.
pub fn estimate_all<G: Generator + ?Sized>(
    queries: &[Query],
    backend: &G,
    grader: &GraderConfig,
    template: &PromptTemplate,
    params: &SamplingParams,
    n_d: u64,
    batch: u32,
    workers: usize,
) -> Result<Vec<(DifficultyRecord, ProfilePool)>, ProfileError> {
    backend.prepare(queries)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| DomainError(e.to_string()))?;
    pool.install(|| {
        queries
            .par_iter()
            .map(|q| estimate_fail_rate(q, backend, grader, template, params, n_d, batch))
            .collect()
    })
}

#[derive(Debug, thiserror::Error)]
pub enum ProfileError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// `1 - (1 - p)^k`.
pub fn pass_at_k_analytic<T: Float>(p: T, k: u64) -> Result<T, DomainError> {
    if !(p >= T::zero() && p <= T::one()) || k == 0 {
        return Err(DomainError(format!("pass@k needs p in [0, 1] and k >= 1 (k = {k})")));
    }
    let k = T::from(k).ok_or_else(|| DomainError("k not representable".into()))?;
    // ln_1p keeps precision when p is tiny
    Ok(-((-p).ln_1p() * k).exp_m1())
}

/// Unbiased estimator `1 - C(n-c, k) / C(n, k)` from `c` correct of `n`.
///
/// Evaluated as a product of ratios each at most 1, so nothing overflows.
pub fn pass_at_k_empirical<T>(n: u64, c: u64, k: u64) -> Result<T, DomainError>
where
    T: Num + Clone + FromPrimitive,
{
    if c > n || k == 0 || k > n {
        return Err(DomainError(format!("pass@k needs 0 <= c <= n and 1 <= k <= n, got n={n} c={c} k={k}")));
    }
    if n - c < k {
        return Ok(T::one());
    }
    let from = |x: u64| T::from_u64(x).ok_or_else(|| DomainError(format!("{x} not representable")));
    let mut miss = T::one();
    for i in 0..k {
        miss = miss * from(n - c - i)? / from(n - i)?;
    }
    Ok(T::one() - miss)
}
