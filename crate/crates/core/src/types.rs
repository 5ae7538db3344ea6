//! Domain values shared across the pipeline.
//!
//! Everything here is an immutable value type. [`TaskExample`] can only be
//! built through [`make_example`], which enforces the option-labelling
//! invariants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_OPTIONS: usize = 26;

/// One labelled answer option, rendered as `(X) content`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptionItem {
    pub label: char,
    pub content: String,
}

/// Record shape accepted by [`make_example`] and by the dataset reader.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub task: String,
    pub question: String,
    pub options: Vec<String>,
    pub answer: usize,
}

/// A multi-choice query with its gold answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskExample {
    id: String,
    task: String,
    question: String,
    options: Vec<OptionItem>,
    answer_index: usize,
}

impl TaskExample {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn task(&self) -> &str {
        &self.task
    }

    pub fn question(&self) -> &str {
        &self.question
    }

    pub fn options(&self) -> &[OptionItem] {
        &self.options
    }

    pub fn answer_label(&self) -> char {
        self.options[self.answer_index].label
    }

    pub fn answer_content(&self) -> &str {
        &self.options[self.answer_index].content
    }

    pub fn answer_index(&self) -> usize {
        self.answer_index
    }

    /// Question followed by its `Options:` block; this is also the key under
    /// which the example is remembered.
    pub fn query_block(&self) -> String {
        render_query_block(&self.question, &self.options)
    }

    /// Gold answer rendered as `(X) content`.
    pub fn target_text(&self) -> String {
        format!("({}) {}", self.answer_label(), self.answer_content())
    }

    pub fn to_record(&self) -> RawRecord {
        RawRecord {
            id: Some(self.id.clone()),
            task: self.task.clone(),
            question: self.question.clone(),
            options: self.options.iter().map(|o| o.content.clone()).collect(),
            answer: self.answer_index,
        }
    }
}

pub fn option_label(index: usize) -> char {
    (b'A' + index as u8) as char
}

/// Validates a raw record and assigns option labels `A`, `B`, ... in list
/// order. A `(X)` prefix already present on an option is discarded.
pub fn make_example(raw: RawRecord) -> Result<TaskExample> {
    make_example_at(raw, None)
}

pub(crate) fn make_example_at(raw: RawRecord, line: Option<usize>) -> Result<TaskExample> {
    let task = raw.task.trim();
    if task.is_empty() {
        return Err(Error::malformed(line, "empty task name"));
    }
    let question = raw.question.trim();
    if question.is_empty() {
        return Err(Error::malformed(line, "empty question"));
    }
    if raw.options.len() < 2 {
        return Err(Error::malformed(
            line,
            format!("need at least 2 options, got {}", raw.options.len()),
        ));
    }
    if raw.options.len() > MAX_OPTIONS {
        return Err(Error::malformed(
            line,
            format!("more than {MAX_OPTIONS} options"),
        ));
    }
    if raw.answer >= raw.options.len() {
        return Err(Error::malformed(
            line,
            format!(
                "answer index {} out of range for {} options",
                raw.answer,
                raw.options.len()
            ),
        ));
    }

    let mut options = Vec::with_capacity(raw.options.len());
    for (i, text) in raw.options.iter().enumerate() {
        let content = strip_label_prefix(text.trim()).trim();
        if content.is_empty() {
            return Err(Error::malformed(line, format!("option {} is empty", i + 1)));
        }
        if content.contains('\n') {
            return Err(Error::malformed(
                line,
                format!("option {} spans several lines", i + 1),
            ));
        }
        let folded = crate::grader::normalize(content);
        if options
            .iter()
            .any(|o: &OptionItem| crate::grader::normalize(&o.content) == folded)
        {
            return Err(Error::malformed(
                line,
                format!("duplicate option content `{content}`"),
            ));
        }
        options.push(OptionItem {
            label: option_label(i),
            content: content.to_string(),
        });
    }

    let id = match raw.id.as_deref().map(str::trim) {
        Some(id) if !id.is_empty() => id.to_string(),
        Some(_) => return Err(Error::malformed(line, "empty id")),
        None => String::new(),
    };

    Ok(TaskExample {
        id,
        task: task.to_string(),
        question: question.to_string(),
        options,
        answer_index: raw.answer,
    })
}

impl TaskExample {
    pub(crate) fn with_id(mut self, id: String) -> Self {
        self.id = id;
        self
    }
}

fn strip_label_prefix(text: &str) -> &str {
    let b = text.as_bytes();
    if b.len() >= 3 && b[0] == b'(' && b[1].is_ascii_uppercase() && b[2] == b')' {
        &text[3..]
    } else {
        text
    }
}

pub fn render_query_block(question: &str, options: &[OptionItem]) -> String {
    let mut out = String::with_capacity(question.len() + 16 + options.len() * 24);
    out.push_str(question);
    out.push_str("\nOptions:");
    for o in options {
        out.push_str(&format!("\n({}) {}", o.label, o.content));
    }
    out
}

/// A query block split back into its question and options.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedQuery {
    pub question: String,
    pub options: Vec<OptionItem>,
}

/// Inverse of [`render_query_block`]. Returns `None` when the text does not
/// end in a well-formed `Options:` block.
pub fn parse_query_block(text: &str) -> Option<ParsedQuery> {
    let split = text.rfind("\nOptions:")?;
    let question = &text[..split];
    let mut lines = text[split + "\nOptions:".len()..].split('\n');
    if lines.next() != Some("") {
        return None;
    }
    let mut options = Vec::new();
    for (i, line) in lines.enumerate() {
        let b = line.as_bytes();
        if b.len() < 4 || b[0] != b'(' || b[2] != b')' || b[3] != b' ' {
            return None;
        }
        let label = b[1] as char;
        if label != option_label(i) {
            return None;
        }
        options.push(OptionItem {
            label,
            content: line[4..].to_string(),
        });
    }
    if options.is_empty() {
        return None;
    }
    Some(ParsedQuery {
        question: question.to_string(),
        options,
    })
}

/// Leading `(X)` label of a rendered answer such as `(B) The client`.
pub fn leading_label(text: &str) -> Option<char> {
    let b = text.trim_start().as_bytes();
    (b.len() >= 3 && b[0] == b'(' && b[1].is_ascii_uppercase() && b[2] == b')')
        .then(|| b[1] as char)
}

/// One generation by the main model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempt {
    pub example_id: String,
    pub response: String,
    pub passed: bool,
    /// 0 is the first attempt.
    pub iteration: usize,
}

/// Assistant-side state: the query, the current response and what was
/// retrieved for it. `context` is empty in the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct AssistState {
    pub query: String,
    pub response: String,
    pub context: Vec<ContextItem>,
}

/// A value retrieved from memory for the current query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextItem {
    pub query: String,
    pub target: String,
    pub wrong_answers: Vec<String>,
    pub guideline: Option<String>,
    pub similarity: f64,
}

/// The assistant's action: why the model went wrong and what to do next time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackNote {
    pub explanation: String,
    pub guideline: String,
}

impl FeedbackNote {
    pub fn new(explanation: impl Into<String>, guideline: impl Into<String>) -> Result<Self> {
        let guideline = guideline.into();
        if guideline.trim().is_empty() {
            return Err(Error::FeedbackParse("guideline is empty".into()));
        }
        Ok(Self {
            explanation: explanation.into(),
            guideline,
        })
    }
}

/// Reward of one attempt: 1 when the grader passed it, else 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub example_id: String,
    pub iteration: usize,
    pub reward: u8,
}

impl From<&Attempt> for RewardRecord {
    fn from(a: &Attempt) -> Self {
        RewardRecord {
            example_id: a.example_id.clone(),
            iteration: a.iteration,
            reward: u8::from(a.passed),
        }
    }
}
