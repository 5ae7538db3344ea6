//! The study assistant: feedback prompts, reply parsing, guideline caching
//! and finetune export.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::backends::{Backend, GenParams};
use crate::error::{Error, Result};
use crate::memory::{Polarity, Store};
use crate::scalar::Scalar;
use crate::student::render_mistake_item;
use crate::types::{AssistState, ContextItem, FeedbackNote};

/// Extra re-prompts after an unparseable reply.
pub const MAX_REPROMPTS: usize = 2;

const JSON_REQUEST: &str = "Please return a JSON with the following keys:\n\
Explanation: explain the potential reason for the model prediction\n\
Guideline: based on the reason, provide instruction as a prompt for the model to avoid similar mistakes\n\
Please do not mention the true answer or any specific option content in your response.";

const GUIDANCE_REQUEST: &str = "Please return a JSON with the following keys:\n\
Explanation: explain the potential reason a model could answer this query incorrectly\n\
Guideline: based on the reason, provide instruction as a prompt for the model to avoid similar mistakes\n\
Please do not mention any specific option content in your response.";

const REPROMPT: &str = "Your previous reply could not be parsed. Reply with only a JSON object with the keys Explanation and Guideline.";

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackRequest {
    pub state: AssistState,
    /// Known only during training.
    pub target: Option<String>,
}

fn context_section(context: &[ContextItem]) -> String {
    if context.is_empty() {
        return String::new();
    }
    let items: Vec<String> = context
        .iter()
        .map(|c| {
            // Only the wrong answers of earlier queries are shown.
            let full = render_mistake_item(c);
            match full.rfind(" The correct answer is") {
                Some(i) => full[..i].to_string(),
                None => full,
            }
        })
        .collect();
    format!(
        "Previous mistakes on similar queries:\n\n{}\n\n",
        items.join("\n\n")
    )
}

pub fn build_feedback_prompt(req: &FeedbackRequest) -> Result<String> {
    let target = req.target.as_deref().ok_or(Error::MissingTarget)?;
    let s = &req.state;
    Ok(format!(
        "{}{}\nWe get the answer {} from the model while the true answer is {}.\n{JSON_REQUEST}",
        context_section(&s.context),
        s.query,
        s.response.trim(),
        target.trim(),
    ))
}

/// Inference-time prompt: the query and retrieved mistakes only.
pub fn build_guidance_prompt(state: &AssistState) -> String {
    format!(
        "{}{}\n{GUIDANCE_REQUEST}",
        context_section(&state.context),
        state.query
    )
}

fn string_field(obj: &Map<String, Value>, name: &str) -> Option<String> {
    obj.iter()
        .find(|(k, _)| k.trim().eq_ignore_ascii_case(name))
        .and_then(|(_, v)| v.as_str())
        .map(|s| s.trim().to_string())
}

/// Parses `{"Explanation": .., "Guideline": ..}`, tolerating surrounding
/// prose or code fences.
pub fn parse_feedback(reply: &str) -> Option<FeedbackNote> {
    let trimmed = reply.trim();
    let value: Value = serde_json::from_str(trimmed).ok().or_else(|| {
        let start = trimmed.find('{')?;
        let end = trimmed.rfind('}')?;
        (start < end)
            .then(|| serde_json::from_str(&trimmed[start..=end]).ok())
            .flatten()
    })?;
    let obj = value.as_object()?;
    let guideline = string_field(obj, "guideline")?;
    let explanation = string_field(obj, "explanation").unwrap_or_default();
    FeedbackNote::new(explanation, guideline).ok()
}

fn ask(prompt: &str, backend: &dyn Backend, params: &GenParams) -> Result<FeedbackNote> {
    let mut reply = backend.complete(prompt, params)?;
    for _ in 0..MAX_REPROMPTS {
        if let Some(note) = parse_feedback(&reply) {
            return Ok(note);
        }
        reply = backend.complete(&format!("{prompt}\n\n{REPROMPT}"), params)?;
    }
    if let Some(note) = parse_feedback(&reply) {
        return Ok(note);
    }
    log::warn!("feedback reply is not JSON after {MAX_REPROMPTS} re-prompts; using it verbatim as the guideline");
    FeedbackNote::new("", reply.trim())
}

pub fn generate_feedback(
    req: &FeedbackRequest,
    backend: &dyn Backend,
    params: &GenParams,
) -> Result<FeedbackNote> {
    ask(&build_feedback_prompt(req)?, backend, params)
}

/// Guideline for a query whose answer is unknown.
pub fn generate_guidance(
    state: &AssistState,
    backend: &dyn Backend,
    params: &GenParams,
) -> Result<FeedbackNote> {
    ask(&build_guidance_prompt(state), backend, params)
}

fn entry_request<F: Scalar>(store: &Store<F>, index: usize) -> FeedbackRequest {
    let e = &store.entries()[index];
    FeedbackRequest {
        state: AssistState {
            query: e.key.clone(),
            response: e.wrong_answers[0].clone(),
            context: Vec::new(),
        },
        target: Some(e.target.clone()),
    }
}

/// Generates guidelines for the listed entries that lack one. Backend calls
/// may run in parallel; results are written in entry order and every
/// successful note is kept even when another call fails. Returns how many
/// entries were annotated.
pub fn annotate_entries<F: Scalar>(
    store: &mut Store<F>,
    indices: &[usize],
    backend: &dyn Backend,
    params: &GenParams,
) -> Result<usize> {
    if store.polarity() != Polarity::Mistakes {
        return Err(Error::PolarityMismatch {
            expected: Polarity::Mistakes.name(),
            actual: store.polarity().name(),
        });
    }
    let mut todo: Vec<usize> = indices
        .iter()
        .copied()
        .filter(|&i| store.entries()[i].guideline.is_none())
        .collect();
    todo.sort_unstable();
    todo.dedup();
    let requests: Vec<FeedbackRequest> = todo.iter().map(|&i| entry_request(store, i)).collect();
    let notes: Vec<Result<FeedbackNote>> = requests
        .par_iter()
        .map(|req| generate_feedback(req, backend, params))
        .collect();
    let mut first_err = None;
    let mut done = 0;
    for (i, note) in todo.into_iter().zip(notes) {
        match note {
            Ok(n) => {
                store.set_guideline(i, n);
                done += 1;
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match first_err {
        Some(e) => Err(e),
        None => Ok(done),
    }
}

pub fn annotate_store<F: Scalar>(
    store: &mut Store<F>,
    backend: &dyn Backend,
    params: &GenParams,
) -> Result<usize> {
    let all: Vec<usize> = (0..store.len()).collect();
    annotate_entries(store, &all, backend, params)
}

pub fn completion_json(note: &FeedbackNote) -> String {
    json!({"Explanation": note.explanation, "Guideline": note.guideline}).to_string()
}

/// Writes `{"prompt", "completion"}` JSONL records, one per annotated entry.
pub fn export_finetune_records<F: Scalar>(
    store: &Store<F>,
    path: impl AsRef<Path>,
) -> Result<usize> {
    let path = path.as_ref();
    let missing: Vec<String> = store
        .entries()
        .iter()
        .filter(|e| e.guideline.is_none())
        .map(|e| e.key.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::UnannotatedEntries(missing));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (i, e) in store.entries().iter().enumerate() {
        let prompt = build_feedback_prompt(&entry_request(store, i))?;
        let note = e.guideline.as_ref().expect("checked above");
        let record = json!({"prompt": prompt, "completion": completion_json(note)});
        writeln!(w, "{record}").map_err(|err| Error::io(path, err))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(store.len())
}
