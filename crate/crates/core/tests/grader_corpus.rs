use dars_core::grader::{grade_response, parse_str, GraderConfig, VerdictKind};
use serde::Deserialize;

#[derive(Deserialize)]
struct Pair {
    candidate: String,
    truth: String,
    expected_verdict: VerdictKind,
}

fn corpus() -> Vec<Pair> {
    include_str!("fixtures/golden_corpus.jsonl")
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).expect("corpus line"))
        .collect()
}

#[test]
fn golden_corpus_full_agreement() {
    let cfg = GraderConfig::default();
    let pairs = corpus();
    assert!(pairs.len() >= 50);
    let mut failures = Vec::new();
    for (i, p) in pairs.iter().enumerate() {
        let truth = parse_str(&p.truth);
        let g = grade_response(&p.candidate, &truth, &cfg);
        let got = match g.outcome {
            dars_core::grader::GradeOutcome::Equivalent => VerdictKind::Equivalent,
            dars_core::grader::GradeOutcome::Indeterminate => VerdictKind::Indeterminate,
            _ => VerdictKind::NotEquivalent,
        };
        if got != p.expected_verdict {
            failures.push(format!(
                "line {}: {:?} vs {:?}: expected {:?}, got {:?} ({})",
                i + 1,
                p.candidate,
                p.truth,
                p.expected_verdict,
                got,
                g.reason
            ));
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}
