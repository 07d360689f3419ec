//! The capped sampling loop that drives each query to its target.
//!
//! Every trial index is consumed at most once per query. A query's
//! `raw_count` is the number of trials up to and including the one that met
//! its target; trials generated past that point in the same batch are
//! discarded and only show up in [`RunMetrics`]. With a deterministic backend
//! this makes reports and datasets independent of batch size and worker
//! count.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::{debug, info};

use crate::allocator::{AllocationTarget, TargetKind};
use crate::backend::{BackendError, Generator, PromptTemplate, SamplingParams};
use crate::dataset::Query;
use crate::grader::{grade_response, GradeOutcome, GraderConfig};
use crate::profiler::ProfilePool;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DedupMode {
    #[default]
    None,
    /// Drop correct responses whose text equals one already kept.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchedulerConfig {
    pub n_max: u64,
    pub batch_size: u32,
    pub workers: usize,
    pub dedup: DedupMode,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self { n_max: 2048, batch_size: 8, workers: 64, dedup: DedupMode::None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pending,
    Achieved,
    Capped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptedTrial {
    pub trial: u64,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptedResponse {
    pub query_id: String,
    pub trial: u64,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryState {
    pub query_id: String,
    pub target: AllocationTarget,
    pub raw_count: u64,
    pub correct: Vec<AcceptedTrial>,
    pub n_indeterminate: u64,
    pub n_duplicates: u64,
    pub status: Status,
}

impl QueryState {
    fn new(target: AllocationTarget) -> Self {
        let status = match target.kind {
            TargetKind::CorrectResponses if target.count == 0 => Status::Achieved,
            _ => Status::Pending,
        };
        Self {
            query_id: target.query_id.clone(),
            target,
            raw_count: 0,
            correct: Vec::new(),
            n_indeterminate: 0,
            n_duplicates: 0,
            status,
        }
    }

    fn limit(&self, n_max: u64) -> u64 {
        match self.target.kind {
            TargetKind::CorrectResponses => n_max,
            TargetKind::RawTrials => self.target.count.min(n_max),
        }
    }

    fn target_met(&self) -> bool {
        match self.target.kind {
            TargetKind::CorrectResponses => self.correct.len() as u64 >= self.target.count,
            TargetKind::RawTrials => self.raw_count >= self.target.count,
        }
    }

    fn check(&self, n_max: u64) {
        assert!(self.raw_count <= n_max, "{}: raw_count {} above cap {n_max}", self.query_id, self.raw_count);
        if self.target.kind == TargetKind::CorrectResponses {
            let n = self.correct.len() as u64;
            assert!(n <= self.target.count, "{}: kept {n} of target {}", self.query_id, self.target.count);
            assert_eq!(n == self.target.count, self.status == Status::Achieved, "{}", self.query_id);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySummary {
    pub query_id: String,
    pub kind: TargetKind,
    pub target: u64,
    pub raw_count: u64,
    pub n_correct: u64,
    pub n_indeterminate: u64,
    pub n_duplicates: u64,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub n_max: u64,
    pub queries: Vec<QuerySummary>,
    pub total_raw: u64,
    pub total_correct_kept: u64,
    pub total_indeterminate: u64,
    pub n_achieved: u64,
    pub n_capped: u64,
    pub achieving_ratio: f64,
}

impl SynthesisReport {
    fn from_states(states: &[QueryState], n_max: u64) -> Self {
        let queries: Vec<QuerySummary> = states
            .iter()
            .map(|s| QuerySummary {
                query_id: s.query_id.clone(),
                kind: s.target.kind,
                target: s.target.count,
                raw_count: s.raw_count,
                n_correct: s.correct.len() as u64,
                n_indeterminate: s.n_indeterminate,
                n_duplicates: s.n_duplicates,
                status: s.status,
            })
            .collect();
        let n_achieved = queries.iter().filter(|q| q.status == Status::Achieved).count() as u64;
        Self {
            n_max,
            total_raw: queries.iter().map(|q| q.raw_count).sum(),
            total_correct_kept: queries.iter().map(|q| q.n_correct).sum(),
            total_indeterminate: queries.iter().map(|q| q.n_indeterminate).sum(),
            n_achieved,
            n_capped: queries.iter().filter(|q| q.status == Status::Capped).count() as u64,
            achieving_ratio: if queries.is_empty() { 1.0 } else { n_achieved as f64 / queries.len() as f64 },
            queries,
        }
    }
}

/// Work actually performed in this session; depends on batching.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub backend_calls: u64,
    pub fresh_trials: u64,
    pub pool_trials: u64,
    /// Fresh trials past a query's target, discarded.
    pub overshoot: u64,
}

#[derive(Default)]
struct Counters {
    backend_calls: AtomicU64,
    fresh_trials: AtomicU64,
    pool_trials: AtomicU64,
    overshoot: AtomicU64,
}

impl Counters {
    fn snapshot(&self) -> RunMetrics {
        RunMetrics {
            backend_calls: self.backend_calls.load(Ordering::Relaxed),
            fresh_trials: self.fresh_trials.load(Ordering::Relaxed),
            pool_trials: self.pool_trials.load(Ordering::Relaxed),
            overshoot: self.overshoot.load(Ordering::Relaxed),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisOutput {
    pub report: SynthesisReport,
    pub states: Vec<QueryState>,
    pub metrics: RunMetrics,
}

impl SynthesisOutput {
    /// Kept responses in query order, then trial order.
    pub fn accepted(&self) -> Vec<AcceptedResponse> {
        self.states
            .iter()
            .flat_map(|s| {
                s.correct.iter().map(|c| AcceptedResponse {
                    query_id: s.query_id.clone(),
                    trial: c.trial,
                    response: c.response.clone(),
                })
            })
            .collect()
    }
}

/// Shared flag checked before every batch.
#[derive(Debug, Clone, Default)]
pub struct CancelToken(Arc<AtomicBool>);

impl CancelToken {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Error)]
pub enum SchedulerError {
    #[error("query {query_id}: {source}")]
    Backend {
        query_id: String,
        #[source]
        source: BackendError,
    },
    #[error("checkpoint was written by a different configuration (stored {stored}, current {current})")]
    ConfigMismatch { stored: String, current: String },
    #[error("interrupted with {pending} queries pending; resume from the checkpoint")]
    Interrupted { pending: usize },
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
    #[error("{0}")]
    InvalidInput(String),
}

impl SchedulerError {
    fn checkpoint(path: &Path, message: impl ToString) -> Self {
        SchedulerError::Checkpoint { path: path.display().to_string(), message: message.to_string() }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct JournalHeader {
    fingerprint: String,
    n_queries: usize,
}

/// State of one query after a batch; `accepted` holds only the new responses.
#[derive(Debug, Serialize, Deserialize)]
struct JournalDelta {
    query_id: String,
    raw_count: u64,
    n_indeterminate: u64,
    n_duplicates: u64,
    status: Status,
    accepted: Vec<AcceptedTrial>,
}

struct Journal {
    file: Mutex<File>,
    path: String,
}

impl Journal {
    fn append(&self, delta: &JournalDelta) -> Result<(), SchedulerError> {
        let mut line = serde_json::to_string(delta).expect("serializable delta");
        line.push('\n');
        let mut f = self.file.lock().expect("journal lock");
        f.write_all(line.as_bytes())
            .and_then(|_| f.flush())
            .map_err(|e| SchedulerError::Checkpoint { path: self.path.clone(), message: e.to_string() })
    }
}

/// One synthesis run over a fixed query set.
pub struct SynthesisJob<'a, G: ?Sized> {
    pub queries: &'a [Query],
    pub targets: &'a [AllocationTarget],
    pub backend: &'a G,
    pub grader: GraderConfig,
    pub template: PromptTemplate,
    pub params: SamplingParams,
    pub config: SchedulerConfig,
    /// Profiling samples replayed in place of trials `0..n_sampled`.
    pub pools: &'a [ProfilePool],
    /// Hash of the caller's configuration; folded into the checkpoint fingerprint.
    pub run_hash: String,
}

enum TrialResult {
    Correct(String),
    Indeterminate,
    Wrong,
}

struct Ctx<'a, G: ?Sized> {
    job: &'a SynthesisJob<'a, G>,
    pools: HashMap<&'a str, PoolIndex<'a>>,
    journal: Option<&'a Journal>,
    cancel: &'a CancelToken,
    counters: &'a Counters,
}

struct PoolIndex<'a> {
    n_sampled: u64,
    correct: HashMap<u64, &'a str>,
    indeterminate: HashSet<u64>,
}

impl<'a, G: Generator + ?Sized> SynthesisJob<'a, G> {
    pub fn new(queries: &'a [Query], targets: &'a [AllocationTarget], backend: &'a G, config: SchedulerConfig) -> Self {
        Self {
            queries,
            targets,
            backend,
            grader: GraderConfig::default(),
            template: PromptTemplate::default(),
            params: SamplingParams::default(),
            config,
            pools: &[],
            run_hash: String::new(),
        }
    }

    pub fn with_pools(mut self, pools: &'a [ProfilePool]) -> Self {
        self.pools = pools;
        self
    }

    pub fn with_run_hash(mut self, hash: impl Into<String>) -> Self {
        self.run_hash = hash.into();
        self
    }

    /// Identifies everything that determines the output; batch size and
    /// worker count are deliberately excluded.
    pub fn fingerprint(&self) -> String {
        #[derive(Serialize)]
        struct Fp<'b> {
            run_hash: &'b str,
            n_max: u64,
            dedup: DedupMode,
            targets: &'b [AllocationTarget],
            queries: Vec<(&'b str, &'b str, &'b str)>,
            pools: Vec<(&'b str, u64)>,
        }
        let fp = Fp {
            run_hash: &self.run_hash,
            n_max: self.config.n_max,
            dedup: self.config.dedup,
            targets: self.targets,
            queries: self.queries.iter().map(|q| (q.id.as_str(), q.problem.as_str(), q.answer.as_str())).collect(),
            pools: self.pools.iter().map(|p| (p.query_id.as_str(), p.n_sampled)).collect(),
        };
        hex::encode(Sha256::digest(serde_json::to_vec(&fp).expect("serializable fingerprint")))
    }

    fn validate(&self) -> Result<(), SchedulerError> {
        let c = &self.config;
        if c.n_max == 0 || c.batch_size == 0 {
            return Err(SchedulerError::InvalidInput("n_max and batch size must be >= 1".into()));
        }
        if self.targets.len() != self.queries.len() {
            return Err(SchedulerError::InvalidInput(format!(
                "{} targets for {} queries",
                self.targets.len(),
                self.queries.len()
            )));
        }
        for (q, t) in self.queries.iter().zip(self.targets) {
            if q.id != t.query_id {
                return Err(SchedulerError::InvalidInput(format!(
                    "target for {:?} is not aligned with query {:?}",
                    t.query_id, q.id
                )));
            }
        }
        self.params.validate().map_err(|e| SchedulerError::InvalidInput(e.to_string()))?;
        Ok(())
    }

    /// Starts from scratch, journaling to `checkpoint` when given.
    pub fn run(&self, checkpoint: Option<&Path>, cancel: &CancelToken) -> Result<SynthesisOutput, SchedulerError> {
        self.validate()?;
        let states: Vec<QueryState> = self.targets.iter().cloned().map(QueryState::new).collect();
        let journal = match checkpoint {
            Some(path) => {
                let mut file = File::create(path).map_err(|e| SchedulerError::checkpoint(path, e))?;
                let header = JournalHeader { fingerprint: self.fingerprint(), n_queries: self.queries.len() };
                writeln!(file, "{}", serde_json::to_string(&header).expect("serializable header"))
                    .map_err(|e| SchedulerError::checkpoint(path, e))?;
                Some(Journal { file: Mutex::new(file), path: path.display().to_string() })
            }
            None => None,
        };
        self.drive(states, journal.as_ref(), cancel)
    }

    /// Continues a journaled run; completed queries are not touched again.
    pub fn resume(&self, checkpoint: &Path, cancel: &CancelToken) -> Result<SynthesisOutput, SchedulerError> {
        self.validate()?;
        let states = self.load_checkpoint(checkpoint)?;
        let file = OpenOptions::new()
            .append(true)
            .open(checkpoint)
            .map_err(|e| SchedulerError::checkpoint(checkpoint, e))?;
        let journal = Journal { file: Mutex::new(file), path: checkpoint.display().to_string() };
        self.drive(states, Some(&journal), cancel)
    }

    fn load_checkpoint(&self, path: &Path) -> Result<Vec<QueryState>, SchedulerError> {
        let file = File::open(path).map_err(|e| SchedulerError::checkpoint(path, e))?;
        let lines: Vec<String> = BufReader::new(file)
            .lines()
            .collect::<Result<_, _>>()
            .map_err(|e| SchedulerError::checkpoint(path, e))?;
        let header: JournalHeader = lines
            .first()
            .and_then(|l| serde_json::from_str(l).ok())
            .ok_or_else(|| SchedulerError::checkpoint(path, "missing header"))?;
        let current = self.fingerprint();
        if header.fingerprint != current {
            return Err(SchedulerError::ConfigMismatch { stored: header.fingerprint, current });
        }
        let mut states: Vec<QueryState> = self.targets.iter().cloned().map(QueryState::new).collect();
        let index: HashMap<String, usize> = states.iter().enumerate().map(|(i, s)| (s.query_id.clone(), i)).collect();
        let body = &lines[1..];
        for (i, line) in body.iter().enumerate() {
            let delta: JournalDelta = match serde_json::from_str(line) {
                Ok(d) => d,
                // a crash mid-write leaves at most one torn final line
                Err(_) if i + 1 == body.len() => break,
                Err(e) => return Err(SchedulerError::checkpoint(path, format!("line {}: {e}", i + 2))),
            };
            let s = index
                .get(&delta.query_id)
                .map(|&i| &mut states[i])
                .ok_or_else(|| SchedulerError::checkpoint(path, format!("unknown query {:?}", delta.query_id)))?;
            s.raw_count = delta.raw_count;
            s.n_indeterminate = delta.n_indeterminate;
            s.n_duplicates = delta.n_duplicates;
            s.status = delta.status;
            s.correct.extend(delta.accepted);
            s.check(self.config.n_max);
        }
        Ok(states)
    }

    fn drive(
        &self,
        states: Vec<QueryState>,
        journal: Option<&Journal>,
        cancel: &CancelToken,
    ) -> Result<SynthesisOutput, SchedulerError> {
        let pending: Vec<Query> = self
            .queries
            .iter()
            .zip(&states)
            .filter(|(_, s)| s.status == Status::Pending)
            .map(|(q, _)| q.clone())
            .collect();
        self.backend.prepare(&pending).map_err(|source| SchedulerError::Backend {
            query_id: pending.first().map(|q| q.id.clone()).unwrap_or_default(),
            source,
        })?;
        let counters = Counters::default();
        let ctx = Ctx {
            job: self,
            pools: self
                .pools
                .iter()
                .map(|p| {
                    let idx = PoolIndex {
                        n_sampled: p.n_sampled,
                        correct: p.correct.iter().map(|c| (c.trial, c.response.as_str())).collect(),
                        indeterminate: p.indeterminate.iter().copied().collect(),
                    };
                    (p.query_id.as_str(), idx)
                })
                .collect(),
            journal,
            cancel,
            counters: &counters,
        };
        let workers = self.config.workers.max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| SchedulerError::InvalidInput(e.to_string()))?;
        info!(queries = self.queries.len(), pending = pending.len(), workers, "starting synthesis");
        let states: Vec<QueryState> = pool.install(|| {
            self.queries
                .par_iter()
                .zip(states.into_par_iter())
                .with_max_len(1)
                .map(|(q, s)| ctx.drive_query(q, s))
                .collect::<Result<_, _>>()
        })?;
        let pending = states.iter().filter(|s| s.status == Status::Pending).count();
        if pending > 0 {
            return Err(SchedulerError::Interrupted { pending });
        }
        Ok(SynthesisOutput {
            report: SynthesisReport::from_states(&states, self.config.n_max),
            states,
            metrics: counters.snapshot(),
        })
    }
}

impl<G: Generator + ?Sized> Ctx<'_, G> {
    fn drive_query(&self, query: &Query, mut state: QueryState) -> Result<QueryState, SchedulerError> {
        let job = self.job;
        let n_max = job.config.n_max;
        let limit = state.limit(n_max);
        if state.status != Status::Pending {
            return Ok(state);
        }
        let prompt = job
            .template
            .render(&query.problem)
            .map_err(|e| SchedulerError::InvalidInput(e.to_string()))?;
        let pool = self.pools.get(query.id.as_str());
        let mut seen: HashSet<String> = match job.config.dedup {
            DedupMode::Exact => state.correct.iter().map(|c| c.response.clone()).collect(),
            DedupMode::None => HashSet::new(),
        };
        while state.status == Status::Pending {
            if self.cancel.is_cancelled() {
                return Ok(state);
            }
            let start = state.raw_count;
            let end = (start + u64::from(job.config.batch_size)).min(limit);
            let results = self.sample(query, &prompt, pool, start, end)?;
            let kept_before = state.correct.len();
            let mut consumed = end;
            for (trial, result) in (start..end).zip(results) {
                match result {
                    TrialResult::Correct(text) => {
                        if job.config.dedup == DedupMode::Exact && !seen.insert(text.clone()) {
                            state.n_duplicates += 1;
                        } else {
                            state.correct.push(AcceptedTrial { trial, response: text });
                        }
                    }
                    TrialResult::Indeterminate => state.n_indeterminate += 1,
                    TrialResult::Wrong => {}
                }
                if state.target.kind == TargetKind::CorrectResponses && state.correct.len() as u64 >= state.target.count {
                    consumed = trial + 1;
                    break;
                }
            }
            let fresh_from = pool.map_or(0, |p| p.n_sampled).max(start);
            self.counters
                .overshoot
                .fetch_add(end - consumed.max(fresh_from).min(end), Ordering::Relaxed);
            state.raw_count = consumed;
            if state.target_met() {
                state.status = Status::Achieved;
            } else if state.raw_count >= limit {
                state.status = Status::Capped;
            }
            state.check(n_max);
            if let Some(j) = self.journal {
                j.append(&JournalDelta {
                    query_id: state.query_id.clone(),
                    raw_count: state.raw_count,
                    n_indeterminate: state.n_indeterminate,
                    n_duplicates: state.n_duplicates,
                    status: state.status,
                    accepted: state.correct[kept_before..].to_vec(),
                })?;
            }
        }
        debug!(query = %state.query_id, raw = state.raw_count, status = ?state.status, "query finished");
        Ok(state)
    }

    /// Outcomes for trials `start..end`, replaying the profiling pool where it
    /// covers them.
    fn sample(
        &self,
        query: &Query,
        prompt: &str,
        pool: Option<&PoolIndex<'_>>,
        start: u64,
        end: u64,
    ) -> Result<Vec<TrialResult>, SchedulerError> {
        let mut out = Vec::with_capacity((end - start) as usize);
        let pool_end = pool.map_or(start, |p| p.n_sampled.clamp(start, end));
        if let Some(p) = pool {
            for t in start..pool_end {
                out.push(match p.correct.get(&t) {
                    Some(text) => TrialResult::Correct((*text).to_string()),
                    None if p.indeterminate.contains(&t) => TrialResult::Indeterminate,
                    None => TrialResult::Wrong,
                });
            }
            self.counters.pool_trials.fetch_add(pool_end - start, Ordering::Relaxed);
        }
        if pool_end < end {
            let n = u32::try_from(end - pool_end).expect("batch fits in u32");
            let completions = self
                .job
                .backend
                .generate(query, prompt, &self.job.params.with_n(n), pool_end)
                .map_err(|source| SchedulerError::Backend { query_id: query.id.clone(), source })?;
            if completions.len() != n as usize {
                return Err(SchedulerError::Backend {
                    query_id: query.id.clone(),
                    source: BackendError::Protocol(format!("asked for {n} completions, got {}", completions.len())),
                });
            }
            self.counters.backend_calls.fetch_add(1, Ordering::Relaxed);
            self.counters.fresh_trials.fetch_add(u64::from(n), Ordering::Relaxed);
            for c in completions {
                let g = grade_response(&c.text, &query.ground_truth, &self.job.grader);
                out.push(if g.correct {
                    TrialResult::Correct(c.text)
                } else if g.outcome == GradeOutcome::Indeterminate {
                    TrialResult::Indeterminate
                } else {
                    TrialResult::Wrong
                });
            }
        }
        Ok(out)
    }
}
