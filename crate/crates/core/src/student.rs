//! Prompt builders for the main model and single-attempt answering.
//!
//! Every template is built from the same query block (question, `Options:`
//! line, one `(X) content` line per option). Blocks are separated by a
//! blank line.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backends::{Backend, GenParams};
use crate::embed::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::grader::{grade, identify_option};
use crate::memory::{Polarity, Store};
use crate::scalar::Scalar;
use crate::types::{leading_label, parse_query_block, Attempt, ContextItem, TaskExample};

pub const PSEUDO_DEMONSTRATIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    ZeroShot,
    FewshotCorrect,
    FewshotMistake,
    Salam,
    PseudoZero,
    PseudoFewshot,
}

impl PromptMode {
    pub const ALL: [PromptMode; 6] = [
        PromptMode::ZeroShot,
        PromptMode::FewshotCorrect,
        PromptMode::FewshotMistake,
        PromptMode::Salam,
        PromptMode::PseudoZero,
        PromptMode::PseudoFewshot,
    ];

    /// The four modes of the main comparison.
    pub const MAIN: [PromptMode; 4] = [
        PromptMode::ZeroShot,
        PromptMode::FewshotCorrect,
        PromptMode::FewshotMistake,
        PromptMode::Salam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PromptMode::ZeroShot => "zero_shot",
            PromptMode::FewshotCorrect => "fewshot_correct",
            PromptMode::FewshotMistake => "fewshot_mistake",
            PromptMode::Salam => "salam",
            PromptMode::PseudoZero => "pseudo_zero",
            PromptMode::PseudoFewshot => "pseudo_fewshot",
        }
    }

    /// Store polarity consulted by the mode, if it retrieves at all.
    pub fn retrieves_from(self) -> Option<Polarity> {
        match self {
            PromptMode::FewshotCorrect => Some(Polarity::Correct),
            PromptMode::FewshotMistake | PromptMode::Salam => Some(Polarity::Mistakes),
            _ => None,
        }
    }

    pub fn is_pseudo(self) -> bool {
        matches!(self, PromptMode::PseudoZero | PromptMode::PseudoFewshot)
    }
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PromptMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PromptMode::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown mode `{s}`")))
    }
}

/// Everything a template may draw on besides the test example.
#[derive(Debug, Clone, Copy, Default)]
pub struct PromptParts<'a> {
    /// Retrieved items (few-shot and salam modes) or demonstrations
    /// (pseudo few-shot). `None` means retrieval did not happen.
    pub context: Option<&'a [ContextItem]>,
    pub guidelines: &'a [String],
    pub pseudo_wrong: Option<char>,
    /// Task description opening a pseudo few-shot prompt.
    pub preamble: Option<&'a str>,
}

fn option_ref(answer: &str, query: &str) -> String {
    if let Some(label) = leading_label(answer) {
        return format!("({label})");
    }
    parse_query_block(query)
        .and_then(|p| identify_option(answer, &p.options))
        .map(|l| format!("({l})"))
        .unwrap_or_else(|| answer.trim().to_string())
}

fn wrong_refs(item: &ContextItem) -> Vec<String> {
    let mut refs: Vec<String> = Vec::new();
    for w in &item.wrong_answers {
        let r = option_ref(w, &item.query);
        if !refs.contains(&r) {
            refs.push(r);
        }
    }
    refs
}

/// `query` + `Previous wrong answer is (A). The correct answer is (B).`
pub fn render_mistake_item(item: &ContextItem) -> String {
    let wrong = wrong_refs(item);
    let correct = option_ref(&item.target, &item.query);
    let lead = if wrong.len() == 1 {
        format!("Previous wrong answer is {}.", wrong[0])
    } else {
        format!("Previous wrong answers are {}.", wrong.join(", "))
    };
    format!("{}\n{lead} The correct answer is {correct}.", item.query)
}

pub fn render_correct_item(item: &ContextItem) -> String {
    format!(
        "{}\nThe answer is {}",
        item.query,
        option_ref(&item.target, &item.query)
    )
}

/// Guidelines of the retrieved items in similarity order, exact duplicates
/// dropped.
pub fn collect_guidelines(context: &[ContextItem]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for g in context.iter().filter_map(|c| c.guideline.as_deref()) {
        if !out.iter().any(|o| o == g) {
            out.push(g.to_string());
        }
    }
    out
}

pub fn build_prompt(
    example: &TaskExample,
    mode: PromptMode,
    parts: PromptParts<'_>,
) -> Result<String> {
    let query = example.query_block();
    let retrieved = || parts.context.ok_or(Error::MissingContext(mode.name()));
    let pseudo_label = || -> Result<char> {
        let label = parts
            .pseudo_wrong
            .ok_or(Error::MissingPseudoLabel(mode.name()))?;
        if label == example.answer_label() || !example.options().iter().any(|o| o.label == label) {
            return Err(Error::InvalidPseudoLabel(label));
        }
        Ok(label)
    };

    let mut blocks: Vec<String> = Vec::new();
    match mode {
        PromptMode::ZeroShot => blocks.push(format!("{query}\nThe answer is")),
        PromptMode::FewshotCorrect => {
            blocks.extend(retrieved()?.iter().map(render_correct_item));
            blocks.push(format!("{query}\nThe answer is"));
        }
        PromptMode::FewshotMistake => {
            blocks.extend(retrieved()?.iter().map(render_mistake_item));
            blocks.push(format!("{query}\nThe correct answer is"));
        }
        PromptMode::Salam => {
            let context = retrieved()?;
            let mut seen: Vec<&str> = Vec::new();
            for g in parts
                .guidelines
                .iter()
                .map(|g| g.trim())
                .filter(|g| !g.is_empty())
            {
                if !seen.contains(&g) {
                    seen.push(g);
                    blocks.push(g.to_string());
                }
            }
            blocks.extend(context.iter().map(render_mistake_item));
            blocks.push(format!("{query}\nThe correct answer is"));
        }
        PromptMode::PseudoZero => {
            blocks.push(format!("{query}\n({}) is wrong", pseudo_label()?));
        }
        PromptMode::PseudoFewshot => {
            let demos = retrieved()?;
            if demos.len() != PSEUDO_DEMONSTRATIONS {
                return Err(Error::DemonstrationCount {
                    expected: PSEUDO_DEMONSTRATIONS,
                    actual: demos.len(),
                });
            }
            if let Some(p) = parts.preamble.map(str::trim).filter(|p| !p.is_empty()) {
                blocks.push(p.to_string());
            }
            for d in demos {
                let wrong = wrong_refs(d)
                    .into_iter()
                    .next()
                    .ok_or(Error::MissingPseudoLabel(mode.name()))?;
                blocks.push(format!(
                    "Q: {}\n{wrong} is wrong\nA: {}",
                    d.query,
                    option_ref(&d.target, &d.query)
                ));
            }
            blocks.push(format!("Q: {query}\n({}) is wrong\nA:", pseudo_label()?));
        }
    }
    Ok(blocks.join("\n\n"))
}

/// Read-only retrieval settings for one evaluation.
pub struct Retriever<'a, F: Scalar = f64> {
    pub store: &'a Store<F>,
    pub embedder: &'a dyn EmbeddingProvider<F>,
    pub k: usize,
    pub theta: F,
}

impl<F: Scalar> Retriever<'_, F> {
    pub fn context(&self, query: &str) -> Result<Vec<ContextItem>> {
        self.store
            .retrieve(self.embedder, query, self.k, self.theta)
    }
}

/// Sends `prompt` to the backend and grades the reply.
pub fn attempt(
    example: &TaskExample,
    prompt: &str,
    backend: &dyn Backend,
    params: &GenParams,
    iteration: usize,
) -> Result<Attempt> {
    let response = backend.complete(prompt, params)?;
    let passed = grade(&response, example).passed;
    Ok(Attempt {
        example_id: example.id().to_string(),
        response,
        passed,
        iteration,
    })
}

/// One answer in a non-pseudo mode, retrieving context when the mode needs
/// it. `guidelines` overrides the cached guidelines of the retrieved items.
pub fn answer<F: Scalar>(
    example: &TaskExample,
    mode: PromptMode,
    retriever: Option<&Retriever<'_, F>>,
    guidelines: Option<&[String]>,
    backend: &dyn Backend,
    params: &GenParams,
) -> Result<Attempt> {
    if mode.is_pseudo() {
        return Err(Error::Config(format!(
            "{mode} prompts are built by the pseudo-mistake evaluation"
        )));
    }
    let context = match mode.retrieves_from() {
        None => Vec::new(),
        Some(polarity) => {
            let r = retriever.ok_or(Error::MissingContext(mode.name()))?;
            if r.store.polarity() != polarity {
                return Err(Error::PolarityMismatch {
                    expected: polarity.name(),
                    actual: r.store.polarity().name(),
                });
            }
            r.context(&example.query_block())?
        }
    };
    let cached;
    let guidelines = match guidelines {
        Some(g) => g,
        None => {
            cached = collect_guidelines(&context);
            &cached
        }
    };
    let parts = PromptParts {
        context: Some(&context),
        guidelines,
        ..Default::default()
    };
    let prompt = build_prompt(example, mode, parts)?;
    attempt(example, &prompt, backend, params, 0)
}
