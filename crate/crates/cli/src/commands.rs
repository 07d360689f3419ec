use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use dars_core::allocator::{allocate, solve_k_for_size, AllocationTarget, Strategy, StrategyConfig};
use dars_core::backend::{Generator, GeneratorProfile, HttpBackend, ProfileEntry, SimulatedBackend};
use dars_core::config::{BackendKind, RunConfig};
use dars_core::cost::{cost_curve, cost_curve_monte_carlo, write_curve_csv, MonteCarloConfig};
use dars_core::dataset::{
    assemble_dataset, compute_stats, load_original_pairs, load_queries, read_dataset, read_jsonl, write_dataset,
    write_jsonl, Query,
};
use dars_core::grader::{grade_response, parse_str};
use dars_core::profiler::{estimate_all, DifficultyRecord, ProfilePool};
use dars_core::scheduler::{AcceptedResponse, CancelToken, SynthesisJob, SynthesisReport};
use sha2::{Digest, Sha256};
use tracing::info;

use crate::args::*;
use crate::error::CliError;

const SNAPSHOT: &str = "run_config.json";

fn out_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn ensure_parent(path: &Path) -> Result<PathBuf, CliError> {
    let dir = out_dir(path);
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn apply_generator(cfg: &mut RunConfig, g: &GeneratorArgs) {
    if let Some(b) = g.backend {
        cfg.generator.backend = b.into();
    }
    if let Some(s) = g.seed {
        cfg.generator.seed = Some(s);
    }
    if let Some(p) = &g.profile {
        cfg.generator.profile = Some(p.clone());
    }
    if let Some(u) = &g.url {
        cfg.generator.http.url = u.clone();
    }
    if let Some(m) = &g.model {
        cfg.generator.http.model = m.clone();
    }
    if let Some(w) = g.workers {
        cfg.scheduler.workers = w;
    }
}

/// The backend plus a digest of everything about it the config hash misses.
fn make_backend(cfg: &RunConfig) -> Result<(Box<dyn Generator>, String), CliError> {
    cfg.generator.sampling.validate()?;
    match cfg.generator.backend {
        BackendKind::Sim => {
            let seed = cfg
                .generator
                .seed
                .ok_or_else(|| CliError::Usage("--seed is required for the simulated backend".into()))?;
            let path = cfg
                .generator
                .profile
                .as_ref()
                .ok_or_else(|| CliError::Usage("--profile is required for the simulated backend".into()))?;
            let bytes = std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            let entries: Vec<ProfileEntry> = read_jsonl(path)?;
            let profile = GeneratorProfile::from_entries(seed, entries);
            Ok((Box::new(SimulatedBackend::new(profile)), hex::encode(Sha256::digest(bytes))))
        }
        BackendKind::Http => Ok((Box::new(HttpBackend::new(cfg.generator.http.clone())), String::new())),
    }
}

fn write_snapshot(cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    cfg.write_snapshot(dir)?;
    Ok(())
}

pub fn estimate(mut cfg: RunConfig, a: EstimateArgs) -> Result<(), CliError> {
    apply_generator(&mut cfg, &a.generator);
    if let Some(n) = a.n_d {
        cfg.profiling.n_d = n;
    }
    let queries = load_queries(&a.queries)?;
    let (backend, _) = make_backend(&cfg)?;
    let results = estimate_all(
        &queries,
        backend.as_ref(),
        &cfg.grader,
        &cfg.template,
        &cfg.generator.sampling,
        cfg.profiling.n_d,
        cfg.profiling.batch_size,
        cfg.scheduler.workers,
    )?;
    let dir = ensure_parent(&a.out)?;
    let (records, pools): (Vec<DifficultyRecord>, Vec<ProfilePool>) = results.into_iter().unzip();
    write_jsonl(&a.out, &records)?;
    let pool_path = a.pool_out.unwrap_or_else(|| {
        let stem = a.out.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        a.out.with_file_name(format!("{stem}.pool.jsonl"))
    });
    write_jsonl(&pool_path, &pools)?;
    write_snapshot(&cfg, &dir)?;
    let mean = records.iter().map(|r| r.fail_rate).sum::<f64>() / records.len().max(1) as f64;
    eprintln!("profiled {} queries with n_d = {}; mean fail rate {mean:.4}", records.len(), cfg.profiling.n_d);
    Ok(())
}

fn load_records(path: &Path) -> Result<Vec<DifficultyRecord>, CliError> {
    let records: Vec<DifficultyRecord> = read_jsonl(path)?;
    for r in &records {
        r.validate()?;
    }
    Ok(records)
}

fn strategy_config(cfg: &RunConfig, strategy: Strategy, k: Option<u64>) -> StrategyConfig {
    let s = StrategyConfig { strategy, ..cfg.strategy.clone() };
    match k {
        Some(k) => s.with_k(k),
        None => s,
    }
}

pub fn plan(mut cfg: RunConfig, a: PlanArgs) -> Result<(), CliError> {
    let records = load_records(&a.difficulty)?;
    let mut s = strategy_config(&cfg, a.strategy.into(), a.k);
    if a.no_cover {
        s.ensure_cover = false;
    }
    if let Some(total) = a.desired_total {
        let k = solve_k_for_size(&records, &s, total)?;
        eprintln!("k = {k} is the smallest value planning at least {total} responses");
        s = s.with_k(k);
    }
    let targets = allocate(&records, &s)?;
    cfg.strategy = s;
    let dir = ensure_parent(&a.out)?;
    write_jsonl(&a.out, &targets)?;
    write_snapshot(&cfg, &dir)?;
    let total: u64 = targets.iter().map(|t| t.count).sum();
    eprintln!("{} targets, {total} planned in total", targets.len());
    Ok(())
}

/// Reorders targets to follow the query file.
fn align_targets(queries: &[Query], targets: Vec<AllocationTarget>) -> Result<Vec<AllocationTarget>, CliError> {
    let mut by_id: HashMap<String, AllocationTarget> = HashMap::new();
    for t in targets {
        if by_id.insert(t.query_id.clone(), t.clone()).is_some() {
            return Err(CliError::Data(format!("duplicate target for {:?}", t.query_id)));
        }
    }
    let aligned = queries
        .iter()
        .map(|q| by_id.remove(&q.id).ok_or_else(|| CliError::Data(format!("no target for query {:?}", q.id))))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(extra) = by_id.keys().min() {
        return Err(CliError::Data(format!("target for unknown query {extra:?}")));
    }
    Ok(aligned)
}

pub fn synthesize(mut cfg: RunConfig, a: SynthesizeArgs) -> Result<(), CliError> {
    apply_generator(&mut cfg, &a.generator);
    if let Some(n) = a.n_max {
        cfg.scheduler.n_max = n;
    }
    if let Some(b) = a.batch {
        cfg.scheduler.batch_size = b;
    }
    if let Some(d) = a.dedup {
        cfg.scheduler.dedup = d.into();
    }
    let queries = load_queries(&a.queries)?;
    let targets = align_targets(&queries, read_jsonl(&a.targets)?)?;
    let pools: Vec<ProfilePool> = match &a.pool {
        Some(p) => read_jsonl(p)?,
        None => Vec::new(),
    };
    let (backend, backend_digest) = make_backend(&cfg)?;
    std::fs::create_dir_all(&a.out)?;
    let mut job = SynthesisJob::new(&queries, &targets, backend.as_ref(), cfg.scheduler.clone())
        .with_pools(&pools)
        .with_run_hash(format!("{}:{backend_digest}", cfg.hash()));
    job.grader = cfg.grader.clone();
    job.template = cfg.template.clone();
    job.params = cfg.generator.sampling;
    let checkpoint = a.out.join("checkpoint.jsonl");
    let cancel = CancelToken::new();
    let out = if a.resume {
        if !checkpoint.exists() {
            return Err(CliError::Usage(format!("--resume given but {} does not exist", checkpoint.display())));
        }
        job.resume(&checkpoint, &cancel)?
    } else {
        job.run(Some(&checkpoint), &cancel)?
    };
    write_jsonl(&a.out.join("accepted.jsonl"), &out.accepted())?;
    std::fs::write(a.out.join("report.json"), serde_json::to_string_pretty(&out.report)? + "\n")?;
    std::fs::write(a.out.join("metrics.json"), serde_json::to_string_pretty(&out.metrics)? + "\n")?;
    write_snapshot(&cfg, &a.out)?;
    let r = &out.report;
    eprintln!(
        "{} queries: {} achieved, {} capped (r = {:.4}); {} raw samples, {} responses kept, {} indeterminate",
        r.queries.len(),
        r.n_achieved,
        r.n_capped,
        r.achieving_ratio,
        r.total_raw,
        r.total_correct_kept,
        r.total_indeterminate
    );
    Ok(())
}

pub fn grade(a: GradeArgs) -> Result<(), CliError> {
    let mut response = String::new();
    if a.response == "-" {
        std::io::stdin().read_to_string(&mut response)?;
    } else {
        response = std::fs::read_to_string(&a.response).map_err(|e| CliError::Data(format!("{}: {e}", a.response)))?;
    }
    let g = grade_response(&response, &parse_str(&a.truth), &Default::default());
    println!("{}", serde_json::to_string(&g)?);
    Ok(())
}

pub fn stats(a: StatsArgs) -> Result<(), CliError> {
    let queries = load_queries(&a.queries)?;
    let records = read_dataset(&a.dataset)?;
    let stats = compute_stats(&records, &queries)?;
    match &a.out {
        Some(path) => {
            ensure_parent(path)?;
            stats.write_csv(path)?;
        }
        None => stats.to_csv(std::io::stdout().lock())?,
    }
    if let Some(share) = stats.hardest_share {
        eprintln!("hardest level holds {:.2}% of {} responses", share * 100.0, stats.total_responses);
    }
    Ok(())
}

/// Expands `a,b,...,c` geometrically when `a * (b/a)^j` lands on `c`,
/// otherwise arithmetically.
pub fn parse_grid(text: &str) -> Result<Vec<u64>, CliError> {
    let parts: Vec<&str> = text.split(',').map(str::trim).filter(|p| !p.is_empty()).collect();
    let num = |s: &str| s.parse::<u64>().map_err(|_| CliError::Data(format!("bad grid value {s:?}")));
    let mut out: Vec<u64> = Vec::new();
    let mut i = 0;
    while i < parts.len() {
        if parts[i] != "..." {
            out.push(num(parts[i])?);
            i += 1;
            continue;
        }
        let end = parts.get(i + 1).map(|s| num(s)).transpose()?;
        let (a, b, end) = match (out.len(), end) {
            (n, Some(end)) if n >= 2 => (out[n - 2], out[n - 1], end),
            _ => return Err(CliError::Data("`...` needs two values before it and one after".into())),
        };
        if b <= a || end < b {
            return Err(CliError::Data(format!("cannot continue {a},{b} up to {end}")));
        }
        let geometric = a > 0 && b % a == 0 && {
            let mut x = b;
            while x < end {
                x = x.saturating_mul(b / a);
            }
            x == end
        };
        let mut x = b;
        loop {
            x = if geometric { x * (b / a) } else { x + (b - a) };
            if x >= end {
                break;
            }
            out.push(x);
        }
        if !geometric && (end - a) % (b - a) != 0 {
            return Err(CliError::Data(format!("{end} is not on the progression {a},{b},...")));
        }
        i += 1;
    }
    Ok(out)
}

/// Success probabilities as exact-enough counts for Prop2Diff planning.
fn records_from_probs(ids: &[String], probs: &[f64]) -> Result<Vec<DifficultyRecord>, CliError> {
    const SCALE: u64 = 1_000_000;
    ids.iter()
        .zip(probs)
        .map(|(id, p)| Ok(DifficultyRecord::new(id.clone(), SCALE, (p * SCALE as f64).round() as u64)?))
        .collect()
}

pub fn curves(cfg: RunConfig, a: CurvesArgs) -> Result<(), CliError> {
    let grid = parse_grid(&a.grid)?;
    let (ids, probs, records) = match (&a.profile, &a.difficulty) {
        (Some(path), _) => {
            let entries: Vec<ProfileEntry> = read_jsonl(path)?;
            let ids: Vec<String> = entries.iter().map(|e| e.query_id.clone()).collect();
            let probs: Vec<f64> = entries.iter().map(|e| e.p).collect();
            let records = records_from_probs(&ids, &probs)?;
            (ids, probs, records)
        }
        (None, Some(path)) => {
            let records = load_records(path)?;
            let ids = records.iter().map(|r| r.query_id.clone()).collect();
            let probs = records.iter().map(DifficultyRecord::success_prob).collect();
            (ids, probs, records)
        }
        (None, None) => return Err(CliError::Usage("one of --profile or --difficulty is required".into())),
    };
    debug_assert_eq!(ids.len(), probs.len());
    let s = strategy_config(&cfg, a.strategy.into(), a.k);
    let targets = allocate(&records, &s)?;
    let mut rows = Vec::new();
    if matches!(a.method, MethodArg::Analytic | MethodArg::Both) {
        rows.extend(cost_curve(&probs, &targets, &grid, a.n_d)?);
    }
    if matches!(a.method, MethodArg::MonteCarlo | MethodArg::Both) {
        let mc = MonteCarloConfig { replicas: a.replicas, seed: a.seed, workers: cfg.scheduler.workers, ..Default::default() };
        rows.extend(cost_curve_monte_carlo(&probs, &targets, &grid, a.n_d, &mc)?);
    }
    match &a.out {
        Some(path) => {
            let dir = ensure_parent(path)?;
            let file = std::fs::File::create(path)?;
            write_curve_csv(&rows, file)?;
            let mut cfg = cfg;
            cfg.strategy = s;
            write_snapshot(&cfg, &dir)?;
        }
        None => write_curve_csv(&rows, std::io::stdout().lock())?,
    }
    Ok(())
}

pub fn export(cfg_override: Option<RunConfig>, a: ExportArgs) -> Result<(), CliError> {
    let snapshot_path = a.run.join(SNAPSHOT);
    let mut cfg = match cfg_override {
        Some(c) => c,
        None => {
            let text = std::fs::read_to_string(&snapshot_path)
                .map_err(|e| CliError::Data(format!("{}: {e}", snapshot_path.display())))?;
            let v: serde_json::Value = serde_json::from_str(&text)?;
            serde_json::from_value(v["config"].clone())?
        }
    };
    if let Some(s) = a.shuffle_seed {
        cfg.shuffle_seed = s;
    }
    let queries = load_queries(&a.queries)?;
    let accepted: Vec<AcceptedResponse> = read_jsonl(&a.run.join("accepted.jsonl"))?;
    let report: SynthesisReport = serde_json::from_str(&std::fs::read_to_string(a.run.join("report.json"))?)?;
    let originals = match &a.originals {
        Some(p) => load_original_pairs(p)?,
        None => Vec::new(),
    };
    if accepted.len() as u64 != report.total_correct_kept {
        return Err(CliError::Data(format!(
            "accepted.jsonl has {} responses but the report kept {}",
            accepted.len(),
            report.total_correct_kept
        )));
    }
    let records = assemble_dataset(&accepted, &queries, &originals, cfg.shuffle_seed)?;
    let dir = ensure_parent(&a.out)?;
    let manifest = write_dataset(&a.out, &records, &cfg.template, &cfg.hash(), cfg.shuffle_seed)?;
    write_snapshot(&cfg, &dir)?;
    info!(path = %a.out.display(), "dataset written");
    let mut err = std::io::stderr().lock();
    writeln!(
        err,
        "{} records ({} synthetic, {} original)",
        manifest.total, manifest.n_synthetic, manifest.n_original
    )?;
    Ok(())
}
