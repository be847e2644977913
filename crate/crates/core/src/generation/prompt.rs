use alloc::format;
use alloc::string::{String, ToString};
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use super::GenerationError;
use crate::chunker::{measure, MeasureUnit};

/// Instruction of the default template.
pub const PROMPT_1: &str = "Given a collection of abstracts from papers used in various medical fields for meta-analysis, generate a meta-analysis abstract. Summarize the key findings and provide numerical values or statistical information for specific observations that are commonly reported in the provided abstracts.";

pub const PROMPT_2: &str = "There are given some abstracts of papers that are used for meta-analysis in different medical fields. Generate a meta-analysis abstract based on the given abstracts of papers. Please try to provide numerical values for any specific findings that were used in most of the abstracts.";

/// Placeholder replaced by the retrieved context.
pub const CONTEXT_SLOT: &str = "{context}";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    #[default]
    Prompt1,
    Prompt2,
    Custom,
}

impl TemplateId {
    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::Prompt1 => "prompt1",
            TemplateId::Prompt2 => "prompt2",
            TemplateId::Custom => "custom",
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = GenerationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "prompt1" => Ok(TemplateId::Prompt1),
            "prompt2" => Ok(TemplateId::Prompt2),
            "custom" => Ok(TemplateId::Custom),
            other => Err(GenerationError::UnknownTemplate(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: TemplateId,
    /// Full template text containing [`CONTEXT_SLOT`].
    pub text: String,
}

impl PromptTemplate {
    pub fn prompt1() -> Self {
        PromptTemplate {
            id: TemplateId::Prompt1,
            text: format!("{PROMPT_1}\n\n{CONTEXT_SLOT}"),
        }
    }

    pub fn prompt2() -> Self {
        PromptTemplate {
            id: TemplateId::Prompt2,
            text: format!("{PROMPT_2}\n\n{CONTEXT_SLOT}"),
        }
    }

    /// A user template. The slot is checked when rendering.
    pub fn custom(text: impl Into<String>) -> Self {
        PromptTemplate {
            id: TemplateId::Custom,
            text: text.into(),
        }
    }

    pub fn builtin(id: TemplateId) -> Option<Self> {
        match id {
            TemplateId::Prompt1 => Some(Self::prompt1()),
            TemplateId::Prompt2 => Some(Self::prompt2()),
            TemplateId::Custom => None,
        }
    }

    /// The template without its context slot, trimmed.
    pub fn instruction(&self) -> &str {
        match self.text.find(CONTEXT_SLOT) {
            Some(pos) if self.text[pos + CONTEXT_SLOT.len()..].trim().is_empty() => self.text[..pos].trim(),
            _ => self.text.trim(),
        }
    }

    /// Units the template contributes to a rendered prompt.
    pub fn overhead_units(&self, unit: MeasureUnit) -> usize {
        measure(&self.text.replacen(CONTEXT_SLOT, "", 1), unit)
    }
}

/// Fills the template's context slot.
pub fn render_prompt(template: &PromptTemplate, context: &str) -> Result<String, GenerationError> {
    if context.trim().is_empty() {
        return Err(GenerationError::EmptyContext);
    }
    if !template.text.contains(CONTEXT_SLOT) {
        return Err(GenerationError::MissingSlot);
    }
    Ok(template.text.replacen(CONTEXT_SLOT, context, 1))
}
