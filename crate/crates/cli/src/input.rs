//! Turning user-typed text plus a gap description into a restoration query.

use lacuna::corpus::normalize_greek;
use lacuna::masking::MAX_GAP_LETTERS;
use lacuna::text::{find_placeholder, placeholder};
use serde::Serialize;

/// A problem tied to one input field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        FieldError { field: field.into(), message: message.into() }
    }

    pub fn prefixed(mut self, prefix: &str) -> Self {
        self.field = format!("{prefix}{}", self.field);
        self
    }
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Normalized context on both sides of a gap of `letters` letters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GapQuery {
    pub left: String,
    pub right: String,
    pub letters: usize,
}

impl GapQuery {
    /// The text with a bracket placeholder, as sent to a chat model.
    pub fn prompt(&self) -> String {
        format!("{}{}{}", self.left, placeholder(self.letters), self.right)
    }

    /// From text containing exactly one `[N letters missing]` placeholder.
    pub fn from_placeholder(text: &str) -> Result<Self, FieldError> {
        let ph = find_placeholder(text)
            .ok_or_else(|| FieldError::new("text", "no `[N letters missing]` placeholder and no gap given"))?;
        let (left, right) = (&text[..ph.byte_range.start], &text[ph.byte_range.end..]);
        if find_placeholder(right).is_some() {
            return Err(FieldError::new("text", "more than one placeholder; restore one gap at a time"));
        }
        Self::build(left, right, ph.letters, "text")
    }

    /// From plain text and a gap inserted at char offset `start`.
    pub fn from_span(text: &str, start: usize, letters: usize) -> Result<Self, FieldError> {
        if find_placeholder(text).is_some() {
            return Err(FieldError::new("text", "text already contains a placeholder; drop it or drop the gap"));
        }
        let len = text.chars().count();
        if start > len {
            return Err(FieldError::new("start", format!("offset {start} is past the end of the text ({len} chars)")));
        }
        let at = text.char_indices().nth(start).map_or(text.len(), |(i, _)| i);
        Self::build(&text[..at], &text[at..], letters, "letters")
    }

    fn build(left: &str, right: &str, letters: usize, field: &str) -> Result<Self, FieldError> {
        if !(1..=MAX_GAP_LETTERS).contains(&letters) {
            return Err(FieldError::new(field, format!("{letters} letters is outside 1..={MAX_GAP_LETTERS}")));
        }
        let mut l = normalize_greek(left);
        if !l.is_empty() && left.ends_with(char::is_whitespace) {
            l.push(' ');
        }
        let mut r = normalize_greek(right);
        if !r.is_empty() && right.starts_with(char::is_whitespace) {
            r.insert(0, ' ');
        }
        Ok(GapQuery { left: l, right: r, letters })
    }
}
