//! Expected sampling cost and achieving ratio as functions of `n_max`.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use num_traits::{Float, FromPrimitive, Num};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocator::{AllocationTarget, TargetKind};
use crate::backend::{GeneratorProfile, SimulatedBackend};
use crate::dataset::Query;
use crate::scheduler::{CancelToken, DedupMode, SchedulerConfig, SchedulerError, Status, SynthesisJob};
use crate::DomainError;

#[derive(Debug, Error)]
pub enum CostError {
    #[error("n_max grid is empty")]
    EmptyGrid,
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
}

fn check_args<T: PartialOrd + Num>(p: &T, k: u64, n_max: u64) -> Result<(), DomainError> {
    if !(*p >= T::zero() && *p <= T::one()) || k == 0 || k > n_max {
        return Err(DomainError(format!("need p in [0, 1] and 1 <= k <= n_max (k = {k}, n_max = {n_max})")));
    }
    Ok(())
}

/// `mass[d] = P(fewer than k successes in d draws)` for `d = 0..=n`.
///
/// This is the probability that a draw-until-k-successes process is still
/// running after `d` draws.
pub fn running_mass<T>(p: T, k: u64, n: u64) -> Result<Vec<T>, DomainError>
where
    T: Num + Clone + FromPrimitive + PartialOrd,
{
    if !(p >= T::zero() && p <= T::one()) || k == 0 {
        return Err(DomainError(format!("need p in [0, 1] and k >= 1 (k = {k})")));
    }
    let q = T::one() - p.clone();
    let k = k as usize;
    // dist[s] = P(exactly s successes so far and still running)
    let mut dist = vec![T::zero(); k];
    dist[0] = T::one();
    let mut mass = Vec::with_capacity(n as usize + 1);
    mass.push(T::one());
    for _ in 0..n {
        for s in (0..k).rev() {
            let stay = dist[s].clone() * q.clone();
            dist[s] = if s > 0 { stay + dist[s - 1].clone() * p.clone() } else { stay };
        }
        mass.push(dist.iter().cloned().fold(T::zero(), |a, b| a + b));
    }
    Ok(mass)
}

/// Expected draws of Bernoulli(p) until `k` successes or `n_max` draws.
pub fn expected_raw_truncated<T>(p: T, k: u64, n_max: u64) -> Result<T, DomainError>
where
    T: Num + Clone + FromPrimitive + PartialOrd,
{
    check_args(&p, k, n_max)?;
    let mass = running_mass(p, k, n_max)?;
    // E[min(R, n)] = sum over d < n of P(R > d)
    Ok(mass[..n_max as usize].iter().cloned().fold(T::zero(), |a, b| a + b))
}

/// `P(Binomial(n_max, p) >= k)`, summed in log space.
pub fn achieving_prob<T: Float>(p: T, k: u64, n_max: u64) -> Result<T, DomainError> {
    check_args(&p, k, n_max)?;
    if p == T::zero() {
        return Ok(T::zero());
    }
    if p == T::one() {
        return Ok(T::one());
    }
    let cast = |x: u64| T::from(x).expect("count representable");
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    // sum the smaller tail so results near 1 come out as 1 - tiny
    let upper = cast(k) > cast(n_max) * p;
    let mut log_c = T::zero();
    let mut terms = Vec::new();
    for j in 0..=n_max {
        if (j >= k) == upper {
            terms.push(log_c + cast(j) * lp + cast(n_max - j) * lq);
        }
        if j < n_max {
            log_c = log_c + cast(n_max - j).ln() - cast(j + 1).ln();
        }
    }
    let top = terms.iter().copied().fold(T::neg_infinity(), T::max);
    let sum = terms.iter().fold(T::zero(), |a, &t| a + (t - top).exp());
    let tail = (top + sum.ln()).exp().min(T::one());
    Ok(if upper { tail } else { T::one() - tail })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveMethod {
    Analytic,
    MonteCarlo,
}

impl fmt::Display for CurveMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CurveMethod::Analytic => "analytic",
            CurveMethod::MonteCarlo => "monte_carlo",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostCurveRow<T> {
    pub n_max: u64,
    /// Expected raw samples over all queries, counting replayed pool trials.
    pub total_raw: T,
    pub achieving_ratio: T,
    pub method: CurveMethod,
    /// Raw samples including the full profiling pass of `n_d` per query.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_raw_with_pool: Option<T>,
}

fn sorted_grid(grid: &[u64]) -> Result<Vec<u64>, CostError> {
    if grid.is_empty() {
        return Err(CostError::EmptyGrid);
    }
    if grid.contains(&0) {
        return Err(DomainError("grid values must be >= 1".into()).into());
    }
    let mut g = grid.to_vec();
    g.sort_unstable();
    g.dedup();
    Ok(g)
}

fn check_inputs(probs: &[f64], targets: &[AllocationTarget]) -> Result<(), DomainError> {
    if probs.len() != targets.len() {
        return Err(DomainError(format!("{} probabilities for {} targets", probs.len(), targets.len())));
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(DomainError(format!("probability {p} outside [0, 1]")));
    }
    Ok(())
}

/// Per-query expected cost at each grid point: (E[raw], P(achieved), E[raw with pool]).
fn query_curve(p: f64, target: &AllocationTarget, grid: &[u64], n_d: u64) -> Vec<(f64, f64, f64)> {
    let with_pool = |raw_at: &dyn Fn(u64) -> f64, n: u64| n_d as f64 + (raw_at(n) - raw_at(n.min(n_d))).max(0.0);
    match (target.kind, target.count) {
        (TargetKind::CorrectResponses, 0) => grid.iter().map(|_| (0.0, 1.0, n_d as f64)).collect(),
        (TargetKind::RawTrials, m) => {
            let raw_at = |n: u64| n.min(m) as f64;
            grid.iter()
                .map(|&n| (raw_at(n), if n >= m { 1.0 } else { 0.0 }, with_pool(&raw_at, n)))
                .collect()
        }
        (TargetKind::CorrectResponses, k) => {
            let top = grid.iter().copied().max().unwrap_or(0).max(n_d);
            let mass = running_mass(p, k, top).expect("validated inputs");
            let mut prefix = Vec::with_capacity(mass.len());
            let mut acc = 0.0;
            prefix.push(0.0);
            for m in &mass[..top as usize] {
                acc += m;
                prefix.push(acc);
            }
            let raw_at = |n: u64| prefix[n as usize];
            grid.iter()
                .map(|&n| {
                    let r = if n < k { 0.0 } else { achieving_prob(p, k, n).expect("validated inputs") };
                    (raw_at(n), r, with_pool(&raw_at, n))
                })
                .collect()
        }
    }
}

/// Analytic curve: sums expected raw draws and averages achieving probability.
pub fn cost_curve(
    probs: &[f64],
    targets: &[AllocationTarget],
    grid: &[u64],
    n_d: Option<u64>,
) -> Result<Vec<CostCurveRow<f64>>, CostError> {
    let grid = sorted_grid(grid)?;
    check_inputs(probs, targets)?;
    let pool = n_d.unwrap_or(0);
    // many queries share (p, target); evaluate each distinct pair once
    let mut keys: Vec<(u64, TargetKind, u64)> = probs
        .iter()
        .zip(targets)
        .map(|(p, t)| (p.to_bits(), t.kind, t.count))
        .collect();
    keys.sort_unstable_by_key(|k| (k.0, k.1 == TargetKind::RawTrials, k.2));
    keys.dedup();
    let memo: HashMap<(u64, TargetKind, u64), Vec<(f64, f64, f64)>> = keys
        .par_iter()
        .map(|&(bits, kind, count)| {
            let t = AllocationTarget { query_id: String::new(), kind, count };
            ((bits, kind, count), query_curve(f64::from_bits(bits), &t, &grid, pool))
        })
        .collect();
    let n = targets.len().max(1) as f64;
    Ok(grid
        .iter()
        .enumerate()
        .map(|(g, &n_max)| {
            let (mut raw, mut r, mut with_pool) = (0.0, 0.0, 0.0);
            for (p, t) in probs.iter().zip(targets) {
                let v = memo[&(p.to_bits(), t.kind, t.count)][g];
                raw += v.0;
                r += v.1;
                with_pool += v.2;
            }
            CostCurveRow {
                n_max,
                total_raw: raw,
                achieving_ratio: if targets.is_empty() { 1.0 } else { r / n },
                method: CurveMethod::Analytic,
                total_raw_with_pool: n_d.map(|_| with_pool),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonteCarloConfig {
    pub replicas: usize,
    pub seed: u64,
    pub batch_size: u32,
    pub workers: usize,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self { replicas: 10_000, seed: 0, batch_size: 64, workers: rayon::current_num_threads() }
    }
}

/// Replays the scheduler on simulated replicas once at the largest grid
/// point and reads every smaller cap off the same runs.
///
/// Replica `i` mirrors profile entry `i mod len`; totals are scaled back to
/// the profile's size.
pub fn cost_curve_monte_carlo(
    probs: &[f64],
    targets: &[AllocationTarget],
    grid: &[u64],
    n_d: Option<u64>,
    mc: &MonteCarloConfig,
) -> Result<Vec<CostCurveRow<f64>>, CostError> {
    let grid = sorted_grid(grid)?;
    check_inputs(probs, targets)?;
    if targets.is_empty() || mc.replicas == 0 {
        return Err(DomainError("Monte Carlo needs at least one target and one replica".into()).into());
    }
    let top = *grid.last().expect("non-empty grid");
    let mut profile = GeneratorProfile::new(mc.seed);
    let mut queries = Vec::with_capacity(mc.replicas);
    let mut rep_targets = Vec::with_capacity(mc.replicas);
    for i in 0..mc.replicas {
        let j = i % targets.len();
        let id = format!("{}#{i}", targets[j].query_id);
        profile.insert(id.clone(), probs[j]);
        queries.push(Query::new(id.clone(), String::new(), "1"));
        rep_targets.push(AllocationTarget { query_id: id, ..targets[j].clone() });
    }
    let backend = SimulatedBackend::new(profile);
    let config = SchedulerConfig {
        n_max: top,
        batch_size: mc.batch_size.max(1),
        workers: mc.workers.max(1),
        dedup: DedupMode::None,
    };
    let out = SynthesisJob::new(&queries, &rep_targets, &backend, config).run(None, &CancelToken::new())?;
    let scale = targets.len() as f64 / mc.replicas as f64;
    let pool = n_d.unwrap_or(0);
    Ok(grid
        .iter()
        .map(|&n| {
            let (mut raw, mut with_pool, mut achieved) = (0u64, 0u64, 0u64);
            for q in &out.report.queries {
                let r = q.raw_count.min(n);
                raw += r;
                with_pool += r.max(pool);
                if q.status == Status::Achieved && q.raw_count <= n {
                    achieved += 1;
                }
            }
            CostCurveRow {
                n_max: n,
                total_raw: raw as f64 * scale,
                achieving_ratio: achieved as f64 / mc.replicas as f64,
                method: CurveMethod::MonteCarlo,
                total_raw_with_pool: n_d.map(|_| with_pool as f64 * scale),
            }
        })
        .collect())
}

/// Smallest grid point whose achieving ratio reaches `r`.
pub fn crossing_point<T: PartialOrd + Copy>(rows: &[CostCurveRow<T>], r: T) -> Option<u64> {
    rows.iter().find(|row| row.achieving_ratio >= r).map(|row| row.n_max)
}

pub fn write_curve_csv<W: Write>(rows: &[CostCurveRow<f64>], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let with_pool = rows.iter().any(|r| r.total_raw_with_pool.is_some());
    let mut header = vec!["n_max", "total_raw", "r", "method"];
    if with_pool {
        header.push("total_raw_with_pool");
    }
    w.write_record(&header)?;
    for row in rows {
        let mut rec = vec![
            row.n_max.to_string(),
            format!("{:.3}", row.total_raw),
            format!("{:.6}", row.achieving_ratio),
            row.method.to_string(),
        ];
        if with_pool {
            rec.push(row.total_raw_with_pool.map(|v| format!("{v:.3}")).unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush()
}
