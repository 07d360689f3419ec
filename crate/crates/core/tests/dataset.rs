use dars_core::allocator::prop2diff_targets;
use dars_core::backend::{GeneratorProfile, PromptTemplate, SamplingParams, SimulatedBackend};
use dars_core::dataset::{
    assemble_dataset, compute_stats, load_queries, read_dataset, write_dataset, write_jsonl, DatasetRecord, Origin,
    OriginalPair, Query, QueryRecord,
};
use dars_core::grader::GraderConfig;
use dars_core::profiler::estimate_all;
use dars_core::scheduler::{CancelToken, SchedulerConfig, SynthesisJob, SynthesisOutput};

const PS: [f64; 4] = [0.9, 0.6, 0.3, 0.1];

fn queries() -> (Vec<Query>, SimulatedBackend) {
    let mut profile = GeneratorProfile::new(31);
    let qs = (0..40)
        .map(|i| {
            let level = (i % 4) as u8 + 1;
            profile.insert(format!("q{i}"), PS[level as usize - 1]);
            Query::new(format!("q{i}"), format!("What is {i} + 1?"), (i + 1).to_string())
                .with_level(level)
                .with_source(if i < 20 { "gsm8k" } else { "math" })
        })
        .collect();
    (qs, SimulatedBackend::new(profile))
}

fn run(qs: &[Query], b: &SimulatedBackend, cover: bool, n_max: u64) -> SynthesisOutput {
    let recs: Vec<_> = estimate_all(qs, b, &GraderConfig::default(), &PromptTemplate::default(), &SamplingParams::default(), 16, 8, 2)
        .unwrap()
        .into_iter()
        .map(|(r, _)| r)
        .collect();
    let t = prop2diff_targets(&recs, 24, cover).unwrap();
    let cfg = SchedulerConfig { n_max, batch_size: 8, workers: 2, ..Default::default() };
    SynthesisJob::new(qs, &t, b, cfg).run(None, &CancelToken::new()).unwrap()
}

#[test]
fn stats_conserve_report_totals() {
    let (qs, b) = queries();
    let out = run(&qs, &b, true, 128);
    let originals: Vec<OriginalPair> = qs
        .iter()
        .take(9)
        .map(|q| OriginalPair { id: q.id.clone(), problem: q.problem.clone(), solution: "by hand".into() })
        .collect();
    let recs = assemble_dataset(&out.accepted(), &qs, &originals, 5).unwrap();
    let stats = compute_stats(&recs, &qs).unwrap();
    assert_eq!(stats.total_synthetic as u64, out.report.total_correct_kept);
    assert_eq!(stats.total_responses as u64, out.report.total_correct_kept + 9);
    assert_eq!(stats.buckets.iter().map(|b| b.n_responses).sum::<usize>(), stats.total_responses);
    assert!(stats.buckets.iter().all(|b| (0.0..=1.0).contains(&b.coverage)));
}

#[test]
fn cover_never_lowers_coverage() {
    let (qs, b) = queries();
    let cov = |cover| {
        let out = run(&qs, &b, cover, 256);
        let recs = assemble_dataset(&out.accepted(), &qs, &[], 0).unwrap();
        compute_stats(&recs, &qs).unwrap().buckets
    };
    let (with, without) = (cov(true), cov(false));
    for (w, o) in with.iter().zip(&without) {
        assert_eq!((&w.source, w.level), (&o.source, o.level));
        assert!(w.coverage >= o.coverage, "{w:?} {o:?}");
    }
    assert!(with.iter().all(|b| b.coverage == 1.0));
}

#[test]
fn emit_then_load_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let (qs, b) = queries();
    let out = run(&qs, &b, true, 64);
    let recs = assemble_dataset(&out.accepted(), &qs, &[], 77).unwrap();
    let path = dir.path().join("data.jsonl");
    write_dataset(&path, &recs, &PromptTemplate::default(), "h", 77).unwrap();
    assert_eq!(read_dataset(&path).unwrap(), recs);

    let qpath = dir.path().join("q.jsonl");
    let lines: Vec<QueryRecord> = qs.iter().map(QueryRecord::from).collect();
    write_jsonl(&qpath, &lines).unwrap();
    assert_eq!(load_queries(&qpath).unwrap(), qs);
}

#[test]
fn prompts_render_with_template() {
    let r = DatasetRecord { query_id: "a".into(), query: "2+2?".into(), response: "4".into(), origin: Origin::Original };
    let p = r.prompt(&PromptTemplate::default()).unwrap();
    assert!(p.starts_with("Below is an instruction that describes a task."));
    assert!(p.contains("2+2?"));
    assert!(p.ends_with("### Response:\n"));
}

#[test]
fn metamath_style_hardest_share() {
    // 1000 responses, 105 of them on level-5 queries
    let mut qs = Vec::new();
    let mut recs = Vec::new();
    let per_level = [224usize, 224, 224, 223, 105];
    for level in 1..=5u8 {
        let total = per_level[level as usize - 1];
        for i in 0..10 {
            let q = Query::new(format!("L{level}-{i}"), "p", "1").with_level(level).with_source("math");
            let n = total / 10 + usize::from(i < total % 10);
            for _ in 0..n {
                recs.push(DatasetRecord { query_id: q.id.clone(), query: "p".into(), response: "r".into(), origin: Origin::Synthetic });
            }
            qs.push(q);
        }
    }
    assert_eq!(recs.len(), 1000);
    let stats = compute_stats(&recs, &qs).unwrap();
    assert_eq!(stats.hardest_share, Some(0.105));
    let by_level = stats.by_level();
    assert_eq!(by_level.len(), 5);
    assert_eq!(by_level[4].n_responses, 105);
}
