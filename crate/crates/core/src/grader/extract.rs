use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnswerSource {
    BoxedMarker,
    AnswerPhrase,
    WholeTail,
}

/// The answer fragment pulled out of a response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawAnswer {
    pub text: String,
    pub source: AnswerSource,
}

impl RawAnswer {
    /// Wraps a literal answer string, e.g. a ground truth from a data file.
    pub fn literal(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            source: AnswerSource::WholeTail,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("no answer found")]
    NoAnswerFound,
    #[error("boxed marker never closes")]
    UnbalancedBraces,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractionConfig {
    /// Boxed-style markers; the content of the last one in the text wins.
    pub markers: Vec<String>,
    /// Case-insensitive phrases; the text after the last occurrence is used.
    pub phrases: Vec<String>,
    /// Fall back to the last non-empty line when nothing else fires.
    pub whole_tail: bool,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            markers: vec!["\\boxed".to_string(), "\\fbox".to_string()],
            phrases: vec!["the answer is".to_string()],
            whole_tail: false,
        }
    }
}

const TRAILING_PUNCT: &[char] = &['.', ',', ';', ':', '!', '?'];

pub fn extract_answer(response: &str, cfg: &ExtractionConfig) -> Result<RawAnswer, ExtractError> {
    if let Some(found) = last_boxed(response, &cfg.markers)? {
        return Ok(RawAnswer {
            text: found,
            source: AnswerSource::BoxedMarker,
        });
    }
    if let Some(found) = after_last_phrase(response, &cfg.phrases) {
        return Ok(RawAnswer {
            text: found,
            source: AnswerSource::AnswerPhrase,
        });
    }
    if cfg.whole_tail {
        if let Some(line) = response.lines().rev().map(str::trim).find(|l| !l.is_empty()) {
            let text = line.trim_end_matches(TRAILING_PUNCT).trim();
            if !text.is_empty() {
                return Ok(RawAnswer {
                    text: text.to_string(),
                    source: AnswerSource::WholeTail,
                });
            }
        }
    }
    Err(ExtractError::NoAnswerFound)
}

/// Content of the last `marker{...}` in `text`, with balanced braces.
fn last_boxed(text: &str, markers: &[String]) -> Result<Option<String>, ExtractError> {
    let mut best: Option<usize> = None;
    let mut open_at = 0;
    for marker in markers {
        let mut from = 0;
        while let Some(rel) = text[from..].find(marker.as_str()) {
            let start = from + rel;
            let after = start + marker.len();
            let rest = &text[after..];
            let skipped = rest.len() - rest.trim_start().len();
            // `\boxed{` but not `\boxedfoo`
            if rest[skipped..].starts_with('{') && best.is_none_or(|b| start > b) {
                best = Some(start);
                open_at = after + skipped;
            }
            from = after;
        }
    }
    let Some(_) = best else {
        return Ok(None);
    };
    let body_start = open_at + 1;
    let mut depth = 1usize;
    let mut escaped = false;
    for (i, ch) in text[body_start..].char_indices() {
        if escaped {
            escaped = false;
            continue;
        }
        match ch {
            '\\' => escaped = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    let inner = text[body_start..body_start + i].trim();
                    if inner.is_empty() {
                        return Ok(None);
                    }
                    return Ok(Some(inner.to_string()));
                }
            }
            _ => {}
        }
    }
    Err(ExtractError::UnbalancedBraces)
}

fn after_last_phrase(text: &str, phrases: &[String]) -> Option<String> {
    // ASCII folding keeps byte offsets aligned with `text`
    let haystack = text.to_ascii_lowercase();
    let mut best: Option<usize> = None;
    for phrase in phrases {
        let needle = phrase.to_ascii_lowercase();
        if needle.is_empty() {
            continue;
        }
        if let Some(pos) = haystack.rfind(&needle) {
            let end = pos + needle.len();
            if best.is_none_or(|b| end > b) {
                best = Some(end);
            }
        }
    }
    let tail = &text[best?..];
    let line = tail.lines().next().unwrap_or("");
    let trimmed = line
        .trim()
        .trim_start_matches(':')
        .trim()
        .trim_end_matches(TRAILING_PUNCT)
        .trim();
    // "The answer is $x$." style
    let trimmed = trimmed.trim_matches('$').trim();
    if trimmed.is_empty() {
        None
    } else {
        Some(trimmed.to_string())
    }
}
