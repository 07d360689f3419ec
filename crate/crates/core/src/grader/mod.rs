//! Final-answer extraction, parsing and equivalence judgement.
//!
//! Every function here is pure; a single [`GraderConfig`] can be shared by
//! any number of worker threads.

mod expr;
mod extract;
mod judge;
mod parse;
mod value;

use serde::{Deserialize, Serialize};

pub use expr::{Constant, Expr, Function};
pub use extract::{extract_answer, AnswerSource, ExtractError, ExtractionConfig, RawAnswer};
pub use judge::{judge_equivalence, Tolerance, Verdict, VerdictKind};
pub use parse::{normalize_text, parse_answer, parse_str};
pub use value::{normalize_rational, AnswerValue, Decimal, Interval, Matrix};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraderConfig {
    pub extraction: ExtractionConfig,
    pub tolerance: Tolerance,
}

/// Why a response was or was not accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GradeOutcome {
    Equivalent,
    NotEquivalent,
    Indeterminate,
    NoAnswerFound,
    UnbalancedBraces,
}

/// One graded response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradedSample {
    pub extracted: Option<String>,
    pub outcome: GradeOutcome,
    pub reason: String,
    pub correct: bool,
}

pub fn grade_response(response: &str, truth: &AnswerValue, cfg: &GraderConfig) -> GradedSample {
    let raw = match extract_answer(response, &cfg.extraction) {
        Ok(raw) => raw,
        Err(e) => {
            let outcome = match e {
                ExtractError::NoAnswerFound => GradeOutcome::NoAnswerFound,
                ExtractError::UnbalancedBraces => GradeOutcome::UnbalancedBraces,
            };
            return GradedSample {
                extracted: None,
                outcome,
                reason: e.to_string(),
                correct: false,
            };
        }
    };
    let value = parse_answer(&raw);
    let verdict = judge_equivalence(&value, truth, &cfg.tolerance);
    let outcome = match verdict.kind {
        VerdictKind::Equivalent => GradeOutcome::Equivalent,
        VerdictKind::NotEquivalent => GradeOutcome::NotEquivalent,
        VerdictKind::Indeterminate => GradeOutcome::Indeterminate,
    };
    GradedSample {
        extracted: Some(raw.text),
        outcome,
        reason: verdict.reason,
        correct: verdict.kind == VerdictKind::Equivalent,
    }
}
