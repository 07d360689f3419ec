//! Per-query synthesis targets.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profiler::DifficultyRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Vrt,
    Uniform,
    Prop2Diff,
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "vrt" => Ok(Strategy::Vrt),
            "uniform" => Ok(Strategy::Uniform),
            "prop2diff" => Ok(Strategy::Prop2Diff),
            other => Err(format!("unknown strategy {other:?} (expected vrt, uniform or prop2diff)")),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Vrt => "vrt",
            Strategy::Uniform => "uniform",
            Strategy::Prop2Diff => "prop2diff",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyConfig {
    pub strategy: Strategy,
    pub k_u: u64,
    pub k_p: u64,
    /// Raw trials per query under VRT.
    pub m: u64,
    pub ensure_cover: bool,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Prop2Diff,
            k_u: 40,
            k_p: 192,
            m: 4,
            ensure_cover: true,
        }
    }
}

impl StrategyConfig {
    /// The parameter `solve_k_for_size` tunes for this strategy.
    pub fn k(&self) -> u64 {
        match self.strategy {
            Strategy::Vrt => self.m,
            Strategy::Uniform => self.k_u,
            Strategy::Prop2Diff => self.k_p,
        }
    }

    pub fn with_k(&self, k: u64) -> Self {
        let mut c = self.clone();
        match c.strategy {
            Strategy::Vrt => c.m = k,
            Strategy::Uniform => c.k_u = k,
            Strategy::Prop2Diff => c.k_p = k,
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    RawTrials,
    CorrectResponses,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AllocationTarget {
    pub query_id: String,
    pub kind: TargetKind,
    pub count: u64,
}

impl AllocationTarget {
    pub fn correct(query_id: impl Into<String>, count: u64) -> Self {
        Self { query_id: query_id.into(), kind: TargetKind::CorrectResponses, count }
    }

    pub fn raw(query_id: impl Into<String>, count: u64) -> Self {
        Self { query_id: query_id.into(), kind: TargetKind::RawTrials, count }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AllocError {
    #[error("no difficulty records")]
    EmptyInput,
    #[error("desired total {desired} unreachable (at most {max} under this strategy)")]
    Unreachable { desired: u64, max: u64 },
    #[error("{0}")]
    InvalidParameter(String),
}

fn positive(name: &str, v: u64) -> Result<(), AllocError> {
    if v == 0 {
        return Err(AllocError::InvalidParameter(format!("{name} must be >= 1")));
    }
    Ok(())
}

pub fn uniform_targets<S: AsRef<str>>(query_ids: &[S], k_u: u64) -> Result<Vec<AllocationTarget>, AllocError> {
    positive("k_u", k_u)?;
    Ok(query_ids.iter().map(|id| AllocationTarget::correct(id.as_ref(), k_u)).collect())
}

pub fn vrt_targets<S: AsRef<str>>(query_ids: &[S], m: u64) -> Result<Vec<AllocationTarget>, AllocError> {
    positive("M", m)?;
    Ok(query_ids.iter().map(|id| AllocationTarget::raw(id.as_ref(), m)).collect())
}

/// `t_i = round_half_up(k_p * f_i / f_max)`, computed on exact fractions.
pub fn prop2diff_targets(
    records: &[DifficultyRecord],
    k_p: u64,
    ensure_cover: bool,
) -> Result<Vec<AllocationTarget>, AllocError> {
    positive("k_p", k_p)?;
    if records.is_empty() {
        return Err(AllocError::EmptyInput);
    }
    let fails: Vec<BigRational> = records
        .iter()
        .map(|r| {
            let f = r.fail_rate_exact();
            BigRational::new(BigInt::from(*f.numer()), BigInt::from(*f.denom()))
        })
        .collect();
    let f_max = fails.iter().max().cloned().unwrap_or_else(BigRational::zero);
    if f_max.is_zero() {
        return Ok(records.iter().map(|r| AllocationTarget::correct(&r.query_id, 1)).collect());
    }
    let two = BigInt::from(2);
    Ok(records
        .iter()
        .zip(&fails)
        .map(|(r, f)| {
            let scaled = BigRational::from_integer(BigInt::from(k_p)) * f / &f_max;
            // floor(x + 1/2) = floor((2 num + den) / (2 den))
            let t = (&two * scaled.numer() + scaled.denom()).div_floor(&(&two * scaled.denom()));
            let mut t = t.to_u64().expect("target bounded by k_p");
            if ensure_cover {
                t = t.max(1);
            }
            AllocationTarget::correct(&r.query_id, t)
        })
        .collect())
}

pub fn allocate(records: &[DifficultyRecord], cfg: &StrategyConfig) -> Result<Vec<AllocationTarget>, AllocError> {
    let ids: Vec<&str> = records.iter().map(|r| r.query_id.as_str()).collect();
    match cfg.strategy {
        Strategy::Vrt => vrt_targets(&ids, cfg.m),
        Strategy::Uniform => uniform_targets(&ids, cfg.k_u),
        Strategy::Prop2Diff => prop2diff_targets(records, cfg.k_p, cfg.ensure_cover),
    }
}

/// Size of the dataset a parameter value would yield if every target were met.
///
/// For VRT this is the expected number of correct responses, `M * sum(1 - f_i)`.
fn planned_size(records: &[DifficultyRecord], cfg: &StrategyConfig, k: u64) -> Result<f64, AllocError> {
    let targets = allocate(records, &cfg.with_k(k))?;
    Ok(match cfg.strategy {
        Strategy::Vrt => records.iter().map(|r| k as f64 * r.success_prob()).sum(),
        _ => targets.iter().map(|t| t.count as f64).sum(),
    })
}

/// Smallest k whose planned size reaches `desired_total`.
///
/// An upper bound on what synthesis delivers, since capped queries fall short.
pub fn solve_k_for_size(records: &[DifficultyRecord], cfg: &StrategyConfig, desired_total: u64) -> Result<u64, AllocError> {
    if records.is_empty() {
        return Err(AllocError::EmptyInput);
    }
    let n = records.len() as u64;
    if desired_total < n {
        return Err(AllocError::InvalidParameter(format!(
            "desired total {desired_total} is below the query count {n}"
        )));
    }
    let desired = desired_total as f64;
    let hi = match cfg.strategy {
        Strategy::Uniform => return Ok(desired_total.div_ceil(n)),
        // the hardest query alone receives k
        Strategy::Prop2Diff => desired_total,
        Strategy::Vrt => {
            let p_sum: f64 = records.iter().map(DifficultyRecord::success_prob).sum();
            if p_sum == 0.0 {
                return Err(AllocError::Unreachable { desired: desired_total, max: 0 });
            }
            (desired / p_sum).ceil() as u64 + 1
        }
    };
    if planned_size(records, cfg, hi)? < desired {
        let max = planned_size(records, cfg, hi)? as u64;
        return Err(AllocError::Unreachable { desired: desired_total, max });
    }
    let (mut lo, mut hi) = (1u64, hi);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if planned_size(records, cfg, mid)? >= desired {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(lo)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, n: u64, wrong: u64) -> DifficultyRecord {
        DifficultyRecord::new(id, n, n - wrong).unwrap()
    }

    fn counts(t: &[AllocationTarget]) -> Vec<u64> {
        t.iter().map(|t| t.count).collect()
    }

    #[test]
    fn uniform_and_vrt() {
        assert_eq!(counts(&uniform_targets(&["a", "b", "c"], 40).unwrap()), [40, 40, 40]);
        assert_eq!(counts(&uniform_targets(&["a"], 1).unwrap()), [1]);
        assert!(uniform_targets::<&str>(&[], 40).unwrap().is_empty());
        let v = vrt_targets(&["a", "b"], 100).unwrap();
        assert!(v.iter().all(|t| t.kind == TargetKind::RawTrials && t.count == 100));
        assert!(vrt_targets::<&str>(&[], 1).unwrap().is_empty());
        assert!(uniform_targets(&["a"], 0).is_err());
    }

    #[test]
    fn prop2diff_examples() {
        let r = [rec("a", 10, 1), rec("b", 10, 5), rec("c", 10, 10)];
        assert_eq!(counts(&prop2diff_targets(&r, 192, true).unwrap()), [19, 96, 192]);
        let z = [rec("a", 10, 0), rec("b", 10, 0)];
        assert_eq!(counts(&prop2diff_targets(&z, 192, true).unwrap()), [1, 1]);
        let r = [rec("a", 1000, 4), rec("b", 10, 10)];
        assert_eq!(counts(&prop2diff_targets(&r, 100, false).unwrap()), [0, 100]);
        assert_eq!(counts(&prop2diff_targets(&r, 100, true).unwrap()), [1, 100]);
        assert_eq!(prop2diff_targets(&[], 10, true), Err(AllocError::EmptyInput));
    }

    #[test]
    fn half_rounds_up_exactly() {
        // 3 * (1/2) / 1 = 1.5 -> 2; 5 * (1/10) = 0.5 -> 1
        let r = [rec("a", 2, 1), rec("b", 2, 2)];
        assert_eq!(counts(&prop2diff_targets(&r, 3, false).unwrap()), [2, 3]);
        let r = [rec("a", 10, 1), rec("b", 10, 10)];
        assert_eq!(counts(&prop2diff_targets(&r, 5, false).unwrap()), [1, 5]);
    }

    #[test]
    fn solve_examples() {
        let ten: Vec<DifficultyRecord> = (0..10).map(|i| rec(&format!("q{i}"), 4, 2)).collect();
        let uni = StrategyConfig { strategy: Strategy::Uniform, ..Default::default() };
        assert_eq!(solve_k_for_size(&ten, &uni, 400).unwrap(), 40);
        assert_eq!(solve_k_for_size(&ten, &uni, 401).unwrap(), 41);
        let p2d = StrategyConfig::default();
        let r = [rec("a", 2, 2), rec("b", 2, 1)];
        assert_eq!(solve_k_for_size(&r, &p2d, 3).unwrap(), 2);
    }

    #[test]
    fn solve_unreachable_and_invalid() {
        let z = [rec("a", 4, 0), rec("b", 4, 0)];
        let p2d = StrategyConfig::default();
        assert!(matches!(solve_k_for_size(&z, &p2d, 3), Err(AllocError::Unreachable { .. })));
        assert!(matches!(solve_k_for_size(&z, &p2d, 1), Err(AllocError::InvalidParameter(_))));
        let vrt = StrategyConfig { strategy: Strategy::Vrt, ..Default::default() };
        let hard = [rec("a", 4, 4)];
        assert!(matches!(solve_k_for_size(&hard, &vrt, 2), Err(AllocError::Unreachable { .. })));
        let half = [rec("a", 4, 2), rec("b", 4, 2)];
        // M * (0.5 + 0.5) >= 7 -> M = 7
        assert_eq!(solve_k_for_size(&half, &vrt, 7).unwrap(), 7);
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in [Strategy::Vrt, Strategy::Uniform, Strategy::Prop2Diff] {
            assert_eq!(s.to_string().parse::<Strategy>().unwrap(), s);
        }
        assert!("greedy".parse::<Strategy>().is_err());
    }
}
