use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const QUERY_PLACEHOLDER: &str = "{query}";

/// Alpaca-style instruction template used for synthesis and training records.
pub const DEFAULT_TEMPLATE: &str = "Below is an instruction that describes a task. Write a response that appropriately completes the request.\n\n###Instruction:\n{query}\n\n### Response:\n";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("template has no {QUERY_PLACEHOLDER} placeholder")]
pub struct MissingPlaceholder;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PromptTemplate {
    text: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self { text: DEFAULT_TEMPLATE.to_string() }
    }
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Result<Self, MissingPlaceholder> {
        let text = text.into();
        if !text.contains(QUERY_PLACEHOLDER) {
            return Err(MissingPlaceholder);
        }
        Ok(Self { text })
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    /// Plain substitution of the first placeholder; the query is not escaped.
    pub fn render(&self, query: &str) -> Result<String, MissingPlaceholder> {
        let (head, tail) = self.text.split_once(QUERY_PLACEHOLDER).ok_or(MissingPlaceholder)?;
        let mut out = String::with_capacity(head.len() + query.len() + tail.len());
        out.push_str(head);
        out.push_str(query);
        out.push_str(tail);
        Ok(out)
    }
}

pub fn render_prompt(query: &str, template: &PromptTemplate) -> Result<String, MissingPlaceholder> {
    template.render(query)
}
