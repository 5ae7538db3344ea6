//! Binary correctness oracle for multi-choice generations.
//!
//! A response passes when it carries the gold label as a standalone `(X)`
//! token or contains the gold option content. Matching is done on
//! normalized text (lowercase, single spaces, outer punctuation removed).

use serde::{Deserialize, Serialize};

use crate::types::{OptionItem, TaskExample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchedBy {
    Label,
    Content,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GradeResult {
    pub passed: bool,
    pub matched_by: MatchedBy,
}

impl GradeResult {
    fn with(matched_by: MatchedBy) -> Self {
        Self {
            passed: matched_by != MatchedBy::None,
            matched_by,
        }
    }
}

/// Brackets are kept so `(C)` survives at either end of a response.
fn is_outer_punct(c: char) -> bool {
    c.is_ascii_punctuation() && !matches!(c, '(' | ')' | '[' | ']' | '{' | '}')
}

pub fn normalize(text: &str) -> String {
    let lowered = text.to_lowercase();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_matches(|c: char| is_outer_punct(c) || c.is_whitespace())
        .to_string()
}

/// Byte offset of the first standalone `(x)` token in normalized `text`.
fn find_label_token(normalized: &str, label: char) -> Option<usize> {
    let needle = format!("({})", label.to_ascii_lowercase());
    normalized
        .match_indices(&needle)
        .map(|(i, _)| i)
        .find(|&i| {
            let before = normalized[..i].chars().next_back();
            let after = normalized[i + needle.len()..].chars().next();
            !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
        })
}

pub fn grade(response: &str, example: &TaskExample) -> GradeResult {
    let norm = normalize(response);
    if norm.is_empty() {
        return GradeResult::with(MatchedBy::None);
    }
    if find_label_token(&norm, example.answer_label()).is_some() {
        return GradeResult::with(MatchedBy::Label);
    }
    let content = normalize(example.answer_content());
    if !content.is_empty() && norm.contains(&content) {
        return GradeResult::with(MatchedBy::Content);
    }
    GradeResult::with(MatchedBy::None)
}

/// 1 when [`grade`] passes, else 0.
pub fn reward(response: &str, example: &TaskExample) -> u8 {
    u8::from(grade(response, example).passed)
}

/// Which option a free-form response points at: the earliest `(X)` token
/// naming one of `options`, else the longest option content it contains.
pub fn identify_option(response: &str, options: &[OptionItem]) -> Option<char> {
    let norm = normalize(response);
    if norm.is_empty() {
        return None;
    }
    let by_label = options
        .iter()
        .filter_map(|o| find_label_token(&norm, o.label).map(|pos| (pos, o.label)))
        .min();
    if let Some((_, label)) = by_label {
        return Some(label);
    }
    options
        .iter()
        .map(|o| (normalize(&o.content), o.label))
        .filter(|(c, _)| !c.is_empty() && norm.contains(c.as_str()))
        .max_by_key(|(c, _)| c.len())
        .map(|(_, label)| label)
}
