//! Prompt templates and conditional prompt rendering.
//!
//! A template is a pattern with one `{text}` slot and at most one
//! `{condition}` slot. Every pattern ends with an opening double quote so the
//! model's next token is the start of the one-word answer, and the hidden
//! state at the final prompt token is the embedding.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const TEXT_SLOT: &str = "{text}";
const CONDITION_SLOT: &str = "{condition}";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("template {id}: pattern must contain `{{text}}` exactly once")]
    TextSlot { id: String },
    #[error("template {id}: pattern may contain `{{condition}}` at most once")]
    ConditionSlot { id: String },
    #[error("template {id}: pattern must end with an opening double quote")]
    MissingTrailingQuote { id: String },
    #[error("template {id}: stray brace outside of a slot")]
    StrayBrace { id: String },
    #[error("template id must be non-empty")]
    EmptyId,
    #[error("template {0} requires a condition")]
    MissingCondition(String),
    #[error("template {0} takes no condition")]
    UnexpectedCondition(String),
    #[error("text must be non-empty")]
    EmptyText,
    #[error("{field} contains a literal brace, which is not supported")]
    LiteralBrace { field: &'static str },
    #[error("unknown template id {0:?}")]
    UnknownTemplate(String),
    #[error("{path}:{line}: {message}")]
    TemplateFile {
        path: String,
        line: usize,
        message: String,
    },
}

/// Pattern piece produced by splitting on slots.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Literal(String),
    Text,
    Condition,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    id: String,
    pattern: String,
    requires_condition: bool,
    pieces: Vec<Piece>,
}

impl PromptTemplate {
    /// Validates `pattern` and builds a template.
    pub fn new(id: impl Into<String>, pattern: impl Into<String>) -> Result<Self, PromptError> {
        let id = id.into();
        let pattern = pattern.into();
        if id.trim().is_empty() {
            return Err(PromptError::EmptyId);
        }
        if pattern.matches(TEXT_SLOT).count() != 1 {
            return Err(PromptError::TextSlot { id });
        }
        let conditions = pattern.matches(CONDITION_SLOT).count();
        if conditions > 1 {
            return Err(PromptError::ConditionSlot { id });
        }
        if !pattern.ends_with('"') {
            return Err(PromptError::MissingTrailingQuote { id });
        }
        let pieces = split_pieces(&pattern).ok_or_else(|| PromptError::StrayBrace { id: id.clone() })?;
        Ok(Self {
            id,
            pattern,
            requires_condition: conditions == 1,
            pieces,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn pattern(&self) -> &str {
        &self.pattern
    }

    pub fn requires_condition(&self) -> bool {
        self.requires_condition
    }

    /// Shorthand for [`render`].
    pub fn render(&self, text: &str, condition: &str) -> Result<ConditionalPrompt, PromptError> {
        render(self, text, condition)
    }
}

impl fmt::Display for PromptTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}", self.id, self.pattern)
    }
}

fn split_pieces(pattern: &str) -> Option<Vec<Piece>> {
    let mut pieces = Vec::new();
    let mut rest = pattern;
    let mut literal = String::new();
    while !rest.is_empty() {
        if let Some(tail) = rest.strip_prefix(TEXT_SLOT) {
            pieces.push(Piece::Literal(std::mem::take(&mut literal)));
            pieces.push(Piece::Text);
            rest = tail;
        } else if let Some(tail) = rest.strip_prefix(CONDITION_SLOT) {
            pieces.push(Piece::Literal(std::mem::take(&mut literal)));
            pieces.push(Piece::Condition);
            rest = tail;
        } else {
            let ch = rest.chars().next()?;
            if ch == '{' || ch == '}' {
                return None;
            }
            literal.push(ch);
            rest = &rest[ch.len_utf8()..];
        }
    }
    pieces.push(Piece::Literal(literal));
    pieces.retain(|p| !matches!(p, Piece::Literal(s) if s.is_empty()));
    Some(pieces)
}

/// A rendered prompt together with the inputs it was built from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConditionalPrompt {
    template_id: String,
    text: String,
    condition: String,
    rendered: String,
}

impl ConditionalPrompt {
    pub fn template_id(&self) -> &str {
        &self.template_id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Empty for unconditional templates.
    pub fn condition(&self) -> &str {
        &self.condition
    }

    pub fn rendered(&self) -> &str {
        &self.rendered
    }
}

/// Substitutes `text` and `condition` into `template` verbatim.
///
/// Quotes inside `text` are not escaped. Braces are rejected because they
/// would be indistinguishable from slot syntax.
pub fn render(
    template: &PromptTemplate,
    text: &str,
    condition: &str,
) -> Result<ConditionalPrompt, PromptError> {
    if text.is_empty() {
        return Err(PromptError::EmptyText);
    }
    if template.requires_condition && condition.is_empty() {
        return Err(PromptError::MissingCondition(template.id.clone()));
    }
    if !template.requires_condition && !condition.is_empty() {
        return Err(PromptError::UnexpectedCondition(template.id.clone()));
    }
    if text.contains(['{', '}']) {
        return Err(PromptError::LiteralBrace { field: "text" });
    }
    if condition.contains(['{', '}']) {
        return Err(PromptError::LiteralBrace { field: "condition" });
    }

    let mut rendered = String::with_capacity(template.pattern.len() + text.len() + condition.len());
    for piece in &template.pieces {
        match piece {
            Piece::Literal(s) => rendered.push_str(s),
            Piece::Text => rendered.push_str(text),
            Piece::Condition => rendered.push_str(condition),
        }
    }
    Ok(ConditionalPrompt {
        template_id: template.id.clone(),
        text: text.to_owned(),
        condition: condition.to_owned(),
        rendered,
    })
}

/// Built-in patterns: the twelve conditional templates followed by the
/// unconditional PromptEOL baseline.
pub const BUILTIN_PATTERNS: [(&str, &str); 13] = [
    ("T1", r#"This text: "{text}" means in terms of {condition}: ""#),
    ("T2", r#"This text: "{text}" means with respect to {condition}: ""#),
    ("T3", r#"This text: "{text}" means in one word in terms of {condition}: ""#),
    ("T4", r#"This text: "{text}" means in one word with respect to {condition}: ""#),
    ("T5", r#"This text: "{text}" means in terms of {condition} in one word: ""#),
    ("T6", r#"This text: "{text}" means with respect to {condition} in one word: ""#),
    ("T7", r#"Express this text "{text}" in terms of {condition}: ""#),
    ("T8", r#"Express this text "{text}" with respect to {condition}: ""#),
    ("T9", r#"Express this text "{text}" in one word in terms of {condition}: ""#),
    ("T10", r#"Express this text "{text}" in one word with respect to {condition}: ""#),
    ("T11", r#"Express this text "{text}" in terms of {condition} in one word: ""#),
    ("T12", r#"Express this text "{text}" with respect to {condition} in one word: ""#),
    ("PromptEOL", r#"This sentence: "{text}" means in one word: ""#),
];

/// Id of the template used when none is given.
pub const DEFAULT_TEMPLATE_ID: &str = "T9";

/// Returns the 13 built-in templates in fixed order.
pub fn registry() -> Vec<PromptTemplate> {
    BUILTIN_PATTERNS
        .iter()
        .map(|(id, pattern)| PromptTemplate::new(*id, *pattern).expect("built-in template is valid"))
        .collect()
}

/// Looks up a template by id (case-insensitive) in `templates`.
pub fn find<'a>(templates: &'a [PromptTemplate], id: &str) -> Result<&'a PromptTemplate, PromptError> {
    templates
        .iter()
        .find(|t| t.id.eq_ignore_ascii_case(id))
        .ok_or_else(|| PromptError::UnknownTemplate(id.to_owned()))
}

/// Parses `id<TAB>pattern` lines. Blank lines and lines starting with `#`
/// are skipped.
pub fn parse_templates(source: &str, origin: &str) -> Result<Vec<PromptTemplate>, PromptError> {
    let mut out = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let file_err = |message: String| PromptError::TemplateFile {
            path: origin.to_owned(),
            line: line_no,
            message,
        };
        let (id, pattern) = line
            .split_once('\t')
            .ok_or_else(|| file_err("expected `id<TAB>pattern`".into()))?;
        let template = PromptTemplate::new(id.trim(), pattern).map_err(|e| file_err(e.to_string()))?;
        if out.iter().any(|t: &PromptTemplate| t.id == template.id) {
            return Err(file_err(format!("duplicate template id {}", template.id)));
        }
        out.push(template);
    }
    Ok(out)
}

pub fn load_templates(path: impl AsRef<Path>) -> Result<Vec<PromptTemplate>, PromptError> {
    let path = path.as_ref();
    let source = fs::read_to_string(path).map_err(|e| PromptError::TemplateFile {
        path: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })?;
    parse_templates(&source, &path.display().to_string())
}
