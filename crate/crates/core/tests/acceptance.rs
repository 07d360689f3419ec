//! End-to-end acceptance checks, one line of output per criterion.
//!
//! Runs without the libtest harness so the summary is printed even when
//! every check passes.

use std::collections::BTreeMap;
use std::panic;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use dars_core::allocator::{prop2diff_targets, uniform_targets, vrt_targets, AllocationTarget};
use dars_core::backend::{
    BackendError, Completion, Generator, GeneratorProfile, PromptTemplate, SamplingParams, SimulatedBackend,
};
use dars_core::cost::{
    cost_curve, cost_curve_monte_carlo, crossing_point, expected_raw_truncated, MonteCarloConfig,
};
use dars_core::dataset::{assemble_dataset, compute_stats, write_dataset, OriginalPair, Query};
use dars_core::grader::{grade_response, parse_str, GradeOutcome, GraderConfig, VerdictKind};
use dars_core::profiler::{estimate_all, pass_at_k_analytic, pass_at_k_empirical, DifficultyRecord, ProfilePool};
use dars_core::rng::CounterRng;
use dars_core::scheduler::{CancelToken, DedupMode, SchedulerConfig, SchedulerError, SynthesisJob};
use dars_core::Exact;
use num_traits::{One, Zero};
use rayon::prelude::*;

const BUCKET_P: [f64; 5] = [0.95, 0.8, 0.6, 0.4, 0.15];
const PROFILE_SEED: u64 = 7;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// shared fixture

const ANSWERS: [&str; 8] = ["42", "\\frac{3}{4}", "2\\sqrt{3}", "(1, 2)", "[0, 1)", "-7", "0.125", "\\text{Monday}"];

/// `per_bucket` queries in each of five difficulty buckets, levels 1..=5.
fn bucketed_queries(per_bucket: usize) -> (Vec<Query>, GeneratorProfile) {
    let mut profile = GeneratorProfile::new(PROFILE_SEED);
    let mut queries = Vec::new();
    for (b, &p) in BUCKET_P.iter().enumerate() {
        for i in 0..per_bucket {
            let id = format!("L{}-{i:03}", b + 1);
            let answer = ANSWERS[(i + b) % ANSWERS.len()];
            queries.push(Query::new(&id, format!("Problem {id}"), answer).with_level(b as u8 + 1).with_source("sim"));
            profile.insert(id, p);
        }
    }
    (queries, profile)
}

fn profile_all(queries: &[Query], backend: &SimulatedBackend, n_d: u64, workers: usize) -> (Vec<DifficultyRecord>, Vec<ProfilePool>) {
    estimate_all(
        queries,
        backend,
        &GraderConfig::default(),
        &PromptTemplate::default(),
        &SamplingParams::default(),
        n_d,
        16,
        workers,
    )
    .expect("profiling")
    .into_iter()
    .unzip()
}

fn sched(n_max: u64, batch: u32, workers: usize) -> SchedulerConfig {
    SchedulerConfig { n_max, batch_size: batch, workers, dedup: DedupMode::None }
}

fn synthesize(
    queries: &[Query],
    targets: &[AllocationTarget],
    backend: &SimulatedBackend,
    pools: &[ProfilePool],
    config: SchedulerConfig,
) -> Vec<dars_core::scheduler::AcceptedResponse> {
    SynthesisJob::new(queries, targets, backend, config)
        .with_pools(pools)
        .run(None, &CancelToken::new())
        .expect("synthesis")
        .accepted()
}

/// Per-level (rpq, coverage) computed by the dataset statistics.
fn level_stats(
    accepted: &[dars_core::scheduler::AcceptedResponse],
    queries: &[Query],
) -> Vec<(f64, f64)> {
    let recs = assemble_dataset(accepted, queries, &[], 0).expect("assemble");
    let stats = compute_stats(&recs, queries).expect("stats");
    (1..=5u8)
        .map(|l| {
            let b = stats.bucket("sim", Some(l)).expect("bucket");
            (b.rpq, b.coverage)
        })
        .collect()
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("/")
}

// ---------------------------------------------------------------------------
// 1. allocation fidelity

fn allocation_fidelity() -> Outcome {
    let (queries, profile) = bucketed_queries(100);
    let backend = SimulatedBackend::new(profile);
    let ids: Vec<&str> = queries.iter().map(|q| q.id.as_str()).collect();

    let uniform = uniform_targets(&ids, 40).map_err(|e| e.to_string())?;
    let acc = synthesize(&queries, &uniform, &backend, &[], sched(8192, 16, 4));
    let uni = level_stats(&acc, &queries);
    ensure(uni.iter().all(|&(rpq, _)| rpq == 40.0), || format!("uniform RPQ not flat: {uni:?}"))?;

    let (records, pools) = profile_all(&queries, &backend, 192, 4);
    let targets = prop2diff_targets(&records, 192, true).map_err(|e| e.to_string())?;
    let acc = synthesize(&queries, &targets, &backend, &pools, sched(8192, 16, 4));
    let p2d: Vec<f64> = level_stats(&acc, &queries).iter().map(|s| s.0).collect();
    ensure(p2d.windows(2).all(|w| w[0] < w[1]), || format!("prop2diff RPQ not increasing: {p2d:?}"))?;
    Ok(format!("uniform RPQ 40 in all buckets; prop2diff RPQ {}", fmt_list(&p2d)))
}

// ---------------------------------------------------------------------------
// 2. coverage

fn coverage() -> Outcome {
    let (queries, profile) = bucketed_queries(100);
    let backend = SimulatedBackend::new(profile);
    let (records, pools) = profile_all(&queries, &backend, 192, 4);

    // smallest n with 1 - (1 - p_min)^n > 0.999, rounded up to a power of two
    let p_min = BUCKET_P.iter().copied().fold(1.0, f64::min);
    let n_needed = ((0.001f64).ln() / (1.0 - p_min).ln()).ceil() as u64;
    let n_max = n_needed.next_power_of_two();
    let targets = prop2diff_targets(&records, 192, true).map_err(|e| e.to_string())?;
    let acc = synthesize(&queries, &targets, &backend, &pools, sched(n_max, 16, 4));
    let cov: Vec<f64> = level_stats(&acc, &queries).iter().map(|s| s.1).collect();
    ensure(cov.iter().all(|&c| c >= 0.996), || format!("prop2diff coverage below 99.6%: {cov:?}"))?;

    let m = 4;
    let ids: Vec<&str> = queries.iter().map(|q| q.id.as_str()).collect();
    let vrt = vrt_targets(&ids, m).map_err(|e| e.to_string())?;
    let acc = synthesize(&queries, &vrt, &backend, &[], sched(1024, 4, 4));
    let vcov: Vec<f64> = level_stats(&acc, &queries).iter().map(|s| s.1).collect();
    let hardest = vcov[4];
    ensure(vcov[..4].iter().all(|&c| c > hardest), || format!("VRT hardest bucket not lowest: {vcov:?}"))?;
    for (c, &p) in vcov.iter().zip(&BUCKET_P) {
        let expect = 1.0 - (1.0 - p).powi(m as i32);
        let sigma = (expect * (1.0 - expect) / 100.0).sqrt();
        ensure((c - expect).abs() <= 3.0 * sigma, || {
            format!("VRT coverage {c} vs expected {expect:.4} (3 sigma {:.4})", 3.0 * sigma)
        })?;
    }
    Ok(format!("prop2diff n_max={n_max} coverage {}; VRT M={m} coverage {}", fmt_list(&cov), fmt_list(&vcov)))
}

// ---------------------------------------------------------------------------
// 3. cost oracle

/// Exact E[draws] by listing every length-n outcome sequence.
fn enumerate_expected_raw(p: &Exact, k: u64, n: u64) -> Exact {
    // tally[ones][stop] counts sequences; each has weight p^ones q^(n-ones)
    let mut tally = vec![vec![0u64; n as usize + 1]; n as usize + 1];
    for seq in 0u32..(1 << n) {
        let mut successes = 0;
        let mut stop = n;
        for d in 0..n {
            if seq >> d & 1 == 1 {
                successes += 1;
                if successes == k {
                    stop = d + 1;
                    break;
                }
            }
        }
        tally[seq.count_ones() as usize][stop as usize] += 1;
    }
    let q = Exact::one() - p;
    let mut total = Exact::zero();
    for (ones, row) in tally.iter().enumerate() {
        let w = num_traits::pow(p.clone(), ones) * num_traits::pow(q.clone(), n as usize - ones);
        for (stop, &count) in row.iter().enumerate() {
            if count > 0 {
                total += &w * Exact::from_integer((count * stop as u64).into());
            }
        }
    }
    total
}

fn cost_oracle() -> Outcome {
    let mut cases = 0;
    for tenth in 1..=9i64 {
        let p = Exact::new(tenth.into(), 10.into());
        for k in 1..=4 {
            for n in k..=12 {
                let dp = expected_raw_truncated(p.clone(), k, n).map_err(|e| e.to_string())?;
                let brute = enumerate_expected_raw(&p, k, n);
                ensure(dp == brute, || format!("p={tenth}/10 k={k} n={n}: dp {dp} vs enumeration {brute}"))?;
                cases += 1;
            }
        }
    }

    let replicas = 10_000;
    let mut means = Vec::new();
    for (p, k) in [(0.5, 40u64), (0.1, 40), (0.9, 40)] {
        let n_max = (50.0 * k as f64 / p) as u64;
        let mut profile = GeneratorProfile::new(11);
        let queries: Vec<Query> = (0..replicas)
            .map(|i| {
                profile.insert(format!("r{i}"), p);
                Query::new(format!("r{i}"), "", "1")
            })
            .collect();
        let ids: Vec<&str> = queries.iter().map(|q| q.id.as_str()).collect();
        let targets = uniform_targets(&ids, k).map_err(|e| e.to_string())?;
        let backend = SimulatedBackend::new(profile);
        let out = SynthesisJob::new(&queries, &targets, &backend, sched(n_max, 64, 4))
            .run(None, &CancelToken::new())
            .map_err(|e| e.to_string())?;
        let mean = out.report.total_raw as f64 / replicas as f64;
        let expect = k as f64 / p;
        ensure((mean / expect - 1.0).abs() <= 0.02, || format!("p={p}: mean raw {mean} vs k/p {expect}"))?;
        means.push(mean);
    }
    Ok(format!("DP equals enumeration on {cases} cases; mean raw {} vs 80/400/44.44", fmt_list(&means)))
}

// ---------------------------------------------------------------------------
// 4. achieving-ratio curve

fn achieving_curve() -> Outcome {
    let (queries, profile) = bucketed_queries(100);
    let backend = SimulatedBackend::new(profile.clone());
    let (records, _) = profile_all(&queries, &backend, 192, 4);
    let probs: Vec<f64> = queries.iter().map(|q| profile.success[&q.id]).collect();
    let ids: Vec<&str> = queries.iter().map(|q| q.id.as_str()).collect();
    let grid: Vec<u64> = (6..=13).map(|e| 1 << e).collect();
    let mc = MonteCarloConfig { replicas: 10_000, seed: 2024, batch_size: 64, workers: 4 };

    let mut crossings = BTreeMap::new();
    let mut worst: f64 = 0.0;
    let strategies = [
        ("uniform", uniform_targets(&ids, 40).map_err(|e| e.to_string())?),
        ("prop2diff", prop2diff_targets(&records, 192, true).map_err(|e| e.to_string())?),
    ];
    for (name, targets) in &strategies {
        let analytic = cost_curve(&probs, targets, &grid, None).map_err(|e| e.to_string())?;
        let simulated = cost_curve_monte_carlo(&probs, targets, &grid, None, &mc).map_err(|e| e.to_string())?;
        for rows in [&analytic, &simulated] {
            ensure(rows.windows(2).all(|w| w[0].achieving_ratio <= w[1].achieving_ratio), || {
                format!("{name}: r not monotone in n_max")
            })?;
            ensure(rows.windows(2).all(|w| w[0].total_raw <= w[1].total_raw), || {
                format!("{name}: total raw not monotone in n_max")
            })?;
        }
        for (a, s) in analytic.iter().zip(&simulated) {
            let gap = (a.achieving_ratio - s.achieving_ratio).abs();
            worst = worst.max(gap);
            ensure(gap <= 0.01, || {
                format!("{name} n_max={}: analytic r {} vs Monte Carlo {}", a.n_max, a.achieving_ratio, s.achieving_ratio)
            })?;
        }
        let cross = crossing_point(&analytic, 0.9).ok_or_else(|| format!("{name} never reaches r = 0.9"))?;
        crossings.insert(*name, cross);
    }
    ensure(crossings["prop2diff"] > crossings["uniform"], || format!("crossing order wrong: {crossings:?}"))?;
    Ok(format!(
        "max |r_MC - r_analytic| = {worst:.4}; r >= 0.9 at n_max {} (uniform) < {} (prop2diff)",
        crossings["uniform"], crossings["prop2diff"]
    ))
}

// ---------------------------------------------------------------------------
// 5. pass@k

fn pass_at_k() -> Outcome {
    for n in 1..=12u64 {
        for c in 0..=n {
            let correct_mask = (1u32 << c) - 1;
            for k in 1..=n {
                let (mut hit, mut total) = (0u64, 0u64);
                for subset in 0u32..(1 << n) {
                    if subset.count_ones() as u64 == k {
                        total += 1;
                        if subset & correct_mask != 0 {
                            hit += 1;
                        }
                    }
                }
                let brute = Exact::new(hit.into(), total.into());
                let est: Exact = pass_at_k_empirical(n, c, k).map_err(|e| e.to_string())?;
                ensure(est == brute, || format!("n={n} c={c} k={k}: {est} vs {brute}"))?;
            }
        }
    }

    // mean of the estimator under Binomial(n, p) counts
    let (n, p, draws) = (50u64, 0.1, 20_000u64);
    let rng = CounterRng::new(99);
    for k in [1u64, 5, 20] {
        let vals: Vec<f64> = (0..draws)
            .map(|d| {
                let c = (0..n).filter(|&j| rng.bernoulli(d * n + j, p)).count() as u64;
                pass_at_k_empirical::<f64>(n, c, k).unwrap()
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / draws as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        let target = pass_at_k_analytic(p, k).map_err(|e| e.to_string())?;
        let tol = 3.0 * (var / draws as f64).sqrt();
        ensure((mean - target).abs() <= tol, || format!("k={k}: mean {mean} vs {target} (3 sigma {tol})"))?;
    }

    // hardest-bucket calibration: pass@100 = 0.9 solves p = 1 - 0.1^(1/100)
    let p_hard = 1.0 - 0.1f64.powf(0.01);
    let k_star = (0.1f64.ln() / (1.0 - p_hard).ln()).ceil() as u64;
    ensure(k_star == 100, || format!("analytic inverse gives k = {k_star}"))?;
    let curve: Vec<f64> = (1..=256).map(|k| pass_at_k_analytic(p_hard, k).unwrap()).collect();
    ensure(curve.windows(2).all(|w| w[0] <= w[1]), || "analytic pass@k not monotone in k".into())?;

    let n_queries = 200;
    let n_samples = 400u64;
    let mut profile = GeneratorProfile::new(5);
    let queries: Vec<Query> = (0..n_queries)
        .map(|i| {
            profile.insert(format!("h{i}"), p_hard);
            Query::new(format!("h{i}"), "", "\\frac{7}{3}")
        })
        .collect();
    let backend = SimulatedBackend::new(profile);
    let (records, _) = profile_all(&queries, &backend, n_samples, 4);
    let est = |k: u64| -> Vec<f64> {
        records
            .iter()
            .map(|r| pass_at_k_empirical::<f64>(r.n_sampled, r.n_correct, k).unwrap())
            .collect()
    };
    let mut sim_curve = Vec::new();
    for k in [1u64, 10, 50, 100, 200] {
        let v = est(k);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
        let target = pass_at_k_analytic(p_hard, k).unwrap();
        let tol = 3.0 * (var / v.len() as f64).sqrt();
        ensure((mean - target).abs() <= tol, || format!("simulated pass@{k} {mean} vs {target} (3 sigma {tol})"))?;
        sim_curve.push(mean);
    }
    ensure(sim_curve.windows(2).all(|w| w[0] <= w[1]), || format!("simulated pass@k not monotone: {sim_curve:?}"))?;
    Ok(format!(
        "exhaustive n <= 12 exact; p = {p_hard:.5} gives simulated pass@1/10/50/100/200 = {}",
        fmt_list(&sim_curve)
    ))
}

// ---------------------------------------------------------------------------
// 6. grader corpus and fuzzing

#[derive(serde::Deserialize)]
struct Pair {
    candidate: String,
    truth: String,
    expected_verdict: VerdictKind,
}

const FUZZ_TOKENS: &[&str] = &[
    "\\frac", "\\dfrac", "{", "}", "(", ")", "[", "]", "\\{", "\\}", "\\sqrt", "^", "_", "\\pi", "e", "x", "y", "1",
    "0", "9", "0.5", ".", "-", "+", "*", "/", "\\left", "\\right", "\\begin{pmatrix}", "\\end{pmatrix}",
    "\\begin{bmatrix}", "\\end{bmatrix}", "\\\\", "&", ",", "\\pm", "\\mp", "\\boxed{", "$", "\\text{", "°", "√",
    "π", "∞", "\\infty", "\\cup", " ", "=", "\\cdot", "\\times", "yes", "true", "\\sin", "\\ln", "^\\circ", "%",
    "\\!", "\\,", "1,000", "e^{", "10^{100}", "2^{-3}", "\\", "\\mathrm{", "é", "中", "\u{0}",
];

fn fuzz_input(i: u64) -> String {
    let rng = CounterRng::new(0xF022).fork(i);
    let len = rng.below(0, 40);
    let mut s = String::new();
    for j in 0..len {
        let c = 1 + 2 * j;
        if rng.below(c, 8) == 0 {
            // raw code point, possibly a surrogate-free random char
            if let Some(ch) = char::from_u32(rng.below(c + 1, 0x3000) as u32) {
                s.push(ch);
            }
        } else {
            s.push_str(FUZZ_TOKENS[rng.below(c + 1, FUZZ_TOKENS.len() as u64) as usize]);
        }
    }
    s
}

fn grader_corpus() -> Outcome {
    let cfg = GraderConfig::default();
    let pairs: Vec<Pair> = include_str!("fixtures/golden_corpus.jsonl")
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).expect("corpus line"))
        .collect();
    ensure(pairs.len() >= 50, || format!("corpus has only {} pairs", pairs.len()))?;
    let mut agree = 0;
    for p in &pairs {
        let g = grade_response(&p.candidate, &parse_str(&p.truth), &cfg);
        let got = match g.outcome {
            GradeOutcome::Equivalent => VerdictKind::Equivalent,
            GradeOutcome::Indeterminate => VerdictKind::Indeterminate,
            _ => VerdictKind::NotEquivalent,
        };
        if got == p.expected_verdict {
            agree += 1;
        }
    }
    ensure(agree == pairs.len(), || format!("agreement {agree}/{}", pairs.len()))?;

    let inputs = 1_000_000u64;
    let hook = panic::take_hook();
    panic::set_hook(Box::new(|_| {}));
    let crashes: Vec<u64> = (0..inputs)
        .into_par_iter()
        .filter(|&i| {
            let s = fuzz_input(i);
            panic::catch_unwind(|| {
                let v = parse_str(&s);
                let _ = v.to_string();
            })
            .is_err()
        })
        .collect();
    panic::set_hook(hook);
    ensure(crashes.is_empty(), || {
        format!("{} crashes, first input {:?}", crashes.len(), fuzz_input(crashes[0]))
    })?;
    Ok(format!("{agree}/{} corpus pairs agree; {inputs} fuzz inputs, 0 crashes", pairs.len()))
}

// ---------------------------------------------------------------------------
// 7. determinism

/// Cancels a run once a given number of backend calls have been made.
struct Interrupting<'a> {
    inner: &'a SimulatedBackend,
    calls: AtomicU64,
    after: u64,
    token: CancelToken,
}

impl Generator for Interrupting<'_> {
    fn generate(&self, q: &Query, prompt: &str, p: &SamplingParams, base: u64) -> Result<Vec<Completion>, BackendError> {
        if self.calls.fetch_add(1, Ordering::SeqCst) + 1 >= self.after {
            self.token.cancel();
        }
        self.inner.generate(q, prompt, p, base)
    }

    fn prepare(&self, queries: &[Query]) -> Result<(), BackendError> {
        self.inner.prepare(queries)
    }
}

struct PipelineBytes {
    dataset: Vec<u8>,
    report: Vec<u8>,
    stats: Vec<u8>,
    backend_calls: u64,
}

fn pipeline(dir: &Path, workers: usize, batch: u32, interrupt_after: Option<u64>) -> Result<PipelineBytes, String> {
    let (queries, profile) = bucketed_queries(30);
    let backend = SimulatedBackend::new(profile);
    let (records, pools) = profile_all(&queries, &backend, 48, workers);
    let targets = prop2diff_targets(&records, 64, true).map_err(|e| e.to_string())?;
    let config = sched(512, batch, workers);
    let checkpoint = dir.join("checkpoint.jsonl");
    fn job<'a, G: Generator + ?Sized>(
        queries: &'a [Query],
        targets: &'a [AllocationTarget],
        pools: &'a [ProfilePool],
        g: &'a G,
        config: &SchedulerConfig,
    ) -> SynthesisJob<'a, G> {
        SynthesisJob::new(queries, targets, g, config.clone()).with_pools(pools).with_run_hash("acceptance")
    }
    let out = match interrupt_after {
        None => job(&queries, &targets, &pools, &backend, &config).run(Some(&checkpoint), &CancelToken::new()).map_err(|e| e.to_string())?,
        Some(after) => {
            let token = CancelToken::new();
            let wrapped = Interrupting { inner: &backend, calls: AtomicU64::new(0), after, token: token.clone() };
            match job(&queries, &targets, &pools, &wrapped, &config).run(Some(&checkpoint), &token) {
                Err(SchedulerError::Interrupted { .. }) => {}
                other => return Err(format!("expected an interruption, got {:?}", other.map(|o| o.report.total_raw))),
            }
            // simulate a crash in the middle of a journal write
            let mut text = std::fs::read_to_string(&checkpoint).map_err(|e| e.to_string())?;
            text.push_str("{\"query_id\":\"L1-0");
            std::fs::write(&checkpoint, text).map_err(|e| e.to_string())?;
            job(&queries, &targets, &pools, &backend, &config).resume(&checkpoint, &CancelToken::new()).map_err(|e| e.to_string())?
        }
    };
    let originals: Vec<OriginalPair> = queries
        .iter()
        .step_by(7)
        .map(|q| OriginalPair { id: q.id.clone(), problem: q.problem.clone(), solution: format!("Human solution: {}", q.answer) })
        .collect();
    let recs = assemble_dataset(&out.accepted(), &queries, &originals, 13).map_err(|e| e.to_string())?;
    let path = dir.join("dataset.jsonl");
    write_dataset(&path, &recs, &PromptTemplate::default(), "acceptance", 13).map_err(|e| e.to_string())?;
    let mut stats = Vec::new();
    compute_stats(&recs, &queries).map_err(|e| e.to_string())?.to_csv(&mut stats).map_err(|e| e.to_string())?;
    Ok(PipelineBytes {
        dataset: std::fs::read(&path).map_err(|e| e.to_string())?,
        report: serde_json::to_vec_pretty(&out.report).expect("report"),
        stats,
        backend_calls: out.metrics.backend_calls,
    })
}

fn determinism() -> Outcome {
    let root = std::env::temp_dir().join(format!("dars-acceptance-{}", std::process::id()));
    let run = |name: &str, w: usize, batch: u32, stop: Option<u64>| -> Result<PipelineBytes, String> {
        let dir = root.join(name);
        std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        pipeline(&dir, w, batch, stop)
    };
    let base = run("w1", 1, 8, None)?;
    let same = |o: &PipelineBytes| o.dataset == base.dataset && o.report == base.report && o.stats == base.stats;
    ensure(same(&run("w1-again", 1, 8, None)?), || "repeat run with W=1 differs".into())?;
    for w in [8, 64] {
        ensure(same(&run(&format!("w{w}"), w, 8, None)?), || format!("W={w} differs from W=1"))?;
    }
    ensure(same(&run("batch3", 8, 3, None)?), || "batch size 3 differs from batch size 8".into())?;
    let resumed = run("resumed", 8, 8, Some(base.backend_calls / 2))?;
    ensure(same(&resumed), || "interrupted and resumed run differs".into())?;
    let _ = std::fs::remove_dir_all(&root);
    Ok(format!(
        "dataset {} bytes identical at W = 1/8/64, batch 3/8, and after interrupt + resume",
        base.dataset.len()
    ))
}

// ---------------------------------------------------------------------------

fn main() {
    let criteria: [(&str, fn() -> Outcome, Option<Duration>); 7] = [
        ("allocation fidelity", allocation_fidelity, Some(Duration::from_secs(60))),
        ("coverage", coverage, None),
        ("cost oracle", cost_oracle, Some(Duration::from_secs(120))),
        ("achieving-ratio curve", achieving_curve, None),
        ("pass@k", pass_at_k, None),
        ("grader corpus and fuzzing", grader_corpus, None),
        ("determinism", determinism, None),
    ];
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let result = match (result, budget) {
            (Ok(_), Some(b)) if elapsed > *b => Err(format!("took {elapsed:.1?}, budget {b:?}")),
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!("criterion {} {name}: PASS ({elapsed:.1?}) {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({elapsed:.1?}) {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
