//! Query sets, dataset assembly and distribution diagnostics.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::backend::{MissingPlaceholder, PromptTemplate};
use crate::grader::{parse_str, AnswerValue};
use crate::rng;
use crate::scheduler::AcceptedResponse;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("duplicate query id {0:?}")]
    DuplicateId(String),
    #[error("unknown query id {0:?}")]
    UnknownQueryId(String),
    #[error(transparent)]
    Template(#[from] MissingPlaceholder),
}

impl DatasetError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DatasetError::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub id: String,
    pub problem: String,
    /// Ground truth as written in the source file.
    pub answer: String,
    pub ground_truth: AnswerValue,
    pub level: Option<u8>,
    pub source: String,
}

impl Query {
    pub fn new(id: impl Into<String>, problem: impl Into<String>, answer: impl Into<String>) -> Self {
        let answer = answer.into();
        Self {
            id: id.into(),
            problem: problem.into(),
            ground_truth: parse_str(&answer),
            answer,
            level: None,
            source: DEFAULT_SOURCE.to_string(),
        }
    }

    pub fn with_level(mut self, level: u8) -> Self {
        self.level = Some(level);
        self
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = source.into();
        self
    }
}

const DEFAULT_SOURCE: &str = "unknown";

/// On-disk query line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryRecord {
    pub id: String,
    pub problem: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl From<&Query> for QueryRecord {
    fn from(q: &Query) -> Self {
        Self {
            id: q.id.clone(),
            problem: q.problem.clone(),
            answer: q.answer.clone(),
            level: q.level,
            source: Some(q.source.clone()),
        }
    }
}

/// Reads JSONL, skipping blank lines; errors carry 1-based line numbers.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, DatasetError> {
    let file = File::open(path).map_err(|e| DatasetError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| DatasetError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<'a, T: Serialize + 'a>(
    path: &Path,
    items: impl IntoIterator<Item = &'a T>,
) -> Result<(), DatasetError> {
    let file = File::create(path).map_err(|e| DatasetError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item).expect("serializable record");
        writeln!(w, "{line}").map_err(|e| DatasetError::io(path, e))?;
    }
    w.flush().map_err(|e| DatasetError::io(path, e))
}

pub fn load_queries(path: &Path) -> Result<Vec<Query>, DatasetError> {
    let records: Vec<QueryRecord> = read_jsonl(path)?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(records.len());
    for (i, r) in records.into_iter().enumerate() {
        if !seen.insert(r.id.clone()) {
            return Err(DatasetError::DuplicateId(r.id));
        }
        if r.answer.trim().is_empty() {
            return Err(DatasetError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("query {:?} has an empty answer", r.id),
            });
        }
        let ground_truth = parse_str(&r.answer);
        if let AnswerValue::Text(t) = &ground_truth {
            warn!(id = %r.id, "answer {:?} kept as text {t:?}", r.answer);
        }
        out.push(Query {
            id: r.id,
            problem: r.problem,
            answer: r.answer,
            ground_truth,
            level: r.level,
            source: r.source.unwrap_or_else(|| DEFAULT_SOURCE.to_string()),
        });
    }
    Ok(out)
}

/// A human-written training pair merged into the final dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OriginalPair {
    pub id: String,
    pub problem: String,
    pub solution: String,
}

pub fn load_original_pairs(path: &Path) -> Result<Vec<OriginalPair>, DatasetError> {
    read_jsonl(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Synthetic,
    Original,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub query_id: String,
    pub query: String,
    pub response: String,
    #[serde(default = "default_origin")]
    pub origin: Origin,
}

fn default_origin() -> Origin {
    Origin::Synthetic
}

impl DatasetRecord {
    /// The instruction prompt this record trains on.
    pub fn prompt(&self, template: &PromptTemplate) -> Result<String, MissingPlaceholder> {
        template.render(&self.query)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub n_synthetic: usize,
    pub n_original: usize,
    pub total: usize,
    pub config_hash: String,
    pub shuffle_seed: u64,
    pub template: PromptTemplate,
}

/// Synthetic responses followed by original pairs, then a seeded shuffle.
pub fn assemble_dataset(
    accepted: &[AcceptedResponse],
    queries: &[Query],
    originals: &[OriginalPair],
    shuffle_seed: u64,
) -> Result<Vec<DatasetRecord>, DatasetError> {
    let by_id: HashMap<&str, &Query> = queries.iter().map(|q| (q.id.as_str(), q)).collect();
    let mut records = Vec::with_capacity(accepted.len() + originals.len());
    for a in accepted {
        let q = by_id
            .get(a.query_id.as_str())
            .ok_or_else(|| DatasetError::UnknownQueryId(a.query_id.clone()))?;
        records.push(DatasetRecord {
            query_id: a.query_id.clone(),
            query: q.problem.clone(),
            response: a.response.clone(),
            origin: Origin::Synthetic,
        });
    }
    records.extend(originals.iter().map(|o| DatasetRecord {
        query_id: o.id.clone(),
        query: o.problem.clone(),
        response: o.solution.clone(),
        origin: Origin::Original,
    }));
    rng::shuffle(&mut records, shuffle_seed);
    Ok(records)
}

pub fn manifest_path(dataset: &Path) -> PathBuf {
    let mut name = dataset.file_stem().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    dataset.with_file_name(name)
}

/// Writes the dataset and its sidecar manifest.
pub fn write_dataset(
    path: &Path,
    records: &[DatasetRecord],
    template: &PromptTemplate,
    config_hash: &str,
    shuffle_seed: u64,
) -> Result<DatasetManifest, DatasetError> {
    for r in records {
        r.prompt(template)?;
    }
    write_jsonl(path, records)?;
    let n_original = records.iter().filter(|r| r.origin == Origin::Original).count();
    let manifest = DatasetManifest {
        n_synthetic: records.len() - n_original,
        n_original,
        total: records.len(),
        config_hash: config_hash.to_string(),
        shuffle_seed,
        template: template.clone(),
    };
    let mpath = manifest_path(path);
    let json = serde_json::to_string_pretty(&manifest).expect("serializable manifest");
    std::fs::write(&mpath, json + "\n").map_err(|e| DatasetError::io(&mpath, e))?;
    Ok(manifest)
}

pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRecord>, DatasetError> {
    read_jsonl(path)
}

// ---------------------------------------------------------------------------
// statistics

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BucketKey {
    pub source: String,
    pub level: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketStats {
    pub source: String,
    pub level: Option<u8>,
    pub n_queries: usize,
    pub n_responses: usize,
    pub n_synthetic: usize,
    /// Synthetic responses per query.
    pub rpq: f64,
    /// Fraction of queries with at least one synthetic response.
    pub coverage: f64,
    /// This bucket's share of all responses.
    pub response_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub buckets: Vec<BucketStats>,
    pub total_responses: usize,
    pub total_synthetic: usize,
    /// Share of all responses that belong to the highest difficulty level.
    pub hardest_share: Option<f64>,
}

impl DatasetStats {
    pub fn bucket(&self, source: &str, level: Option<u8>) -> Option<&BucketStats> {
        self.buckets.iter().find(|b| b.source == source && b.level == level)
    }

    /// Per-level view merging sources, ordered by level.
    pub fn by_level(&self) -> Vec<BucketStats> {
        let mut merged: BTreeMap<Option<u8>, (usize, usize, usize, usize)> = BTreeMap::new();
        for b in &self.buckets {
            let e = merged.entry(b.level).or_default();
            e.0 += b.n_queries;
            e.1 += b.n_responses;
            e.2 += b.n_synthetic;
            e.3 += (b.coverage * b.n_queries as f64).round() as usize;
        }
        merged
            .into_iter()
            .map(|(level, (nq, nr, ns, covered))| BucketStats {
                source: "all".to_string(),
                level,
                n_queries: nq,
                n_responses: nr,
                n_synthetic: ns,
                rpq: ratio(ns, nq),
                coverage: ratio(covered, nq),
                response_share: ratio(nr, self.total_responses),
            })
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), DatasetError> {
        let file = File::create(path).map_err(|e| DatasetError::io(path, e))?;
        self.to_csv(file).map_err(|e| DatasetError::io(path, e))
    }

    pub fn to_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "source",
            "level",
            "n_queries",
            "n_responses",
            "n_synthetic",
            "rpq",
            "coverage",
            "response_share",
        ])?;
        for b in &self.buckets {
            w.write_record([
                b.source.clone(),
                b.level.map(|l| l.to_string()).unwrap_or_default(),
                b.n_queries.to_string(),
                b.n_responses.to_string(),
                b.n_synthetic.to_string(),
                format!("{:.4}", b.rpq),
                format!("{:.4}", b.coverage),
                format!("{:.4}", b.response_share),
            ])?;
        }
        w.flush()
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn compute_stats(records: &[DatasetRecord], queries: &[Query]) -> Result<DatasetStats, DatasetError> {
    let by_id: HashMap<&str, &Query> = queries.iter().map(|q| (q.id.as_str(), q)).collect();
    let key = |q: &Query| BucketKey { source: q.source.clone(), level: q.level };

    let mut n_queries: BTreeMap<BucketKey, usize> = BTreeMap::new();
    for q in queries {
        *n_queries.entry(key(q)).or_default() += 1;
    }
    let mut responses: BTreeMap<BucketKey, usize> = BTreeMap::new();
    let mut synthetic: BTreeMap<BucketKey, usize> = BTreeMap::new();
    let mut covered: HashSet<&str> = HashSet::new();
    for r in records {
        let q = by_id
            .get(r.query_id.as_str())
            .ok_or_else(|| DatasetError::UnknownQueryId(r.query_id.clone()))?;
        *responses.entry(key(q)).or_default() += 1;
        if r.origin == Origin::Synthetic {
            *synthetic.entry(key(q)).or_default() += 1;
            covered.insert(q.id.as_str());
        }
    }
    let mut covered_per_bucket: BTreeMap<BucketKey, usize> = BTreeMap::new();
    for q in queries {
        if covered.contains(q.id.as_str()) {
            *covered_per_bucket.entry(key(q)).or_default() += 1;
        }
    }

    let total = records.len();
    let buckets: Vec<BucketStats> = n_queries
        .iter()
        .map(|(k, &nq)| {
            let nr = responses.get(k).copied().unwrap_or(0);
            let ns = synthetic.get(k).copied().unwrap_or(0);
            let nc = covered_per_bucket.get(k).copied().unwrap_or(0);
            BucketStats {
                source: k.source.clone(),
                level: k.level,
                n_queries: nq,
                n_responses: nr,
                n_synthetic: ns,
                rpq: ratio(ns, nq),
                coverage: ratio(nc, nq),
                response_share: ratio(nr, total),
            }
        })
        .collect();

    let hardest_share = queries.iter().filter_map(|q| q.level).max().map(|top| {
        let n: usize = buckets.iter().filter(|b| b.level == Some(top)).map(|b| b.n_responses).sum();
        ratio(n, total)
    });

    Ok(DatasetStats {
        total_synthetic: buckets.iter().map(|b| b.n_synthetic).sum(),
        total_responses: total,
        buckets,
        hardest_share,
    })
}
