use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embed::fnv1a;
use crate::error::{Error, Result};
use crate::types::{make_example_at, RawRecord, TaskExample};

/// Parses dataset JSONL: one `{"task","question","options","answer"}`
/// record per line, optional `"id"`. Missing ids become `<task>-<n>`.
pub fn parse_dataset(text: &str) -> Result<Vec<TaskExample>> {
    let mut out = Vec::new();
    let mut per_task: BTreeMap<String, usize> = BTreeMap::new();
    let mut ids = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(line)
            .map_err(|e| Error::malformed(Some(lineno), e.to_string()))?;
        let ex = make_example_at(raw, Some(lineno))?;
        let n = per_task.entry(ex.task().to_string()).or_default();
        let ex = if ex.id().is_empty() {
            let id = format!("{}-{}", ex.task(), n);
            ex.with_id(id)
        } else {
            ex
        };
        *n += 1;
        if !ids.insert(ex.id().to_string()) {
            return Err(Error::malformed(
                Some(lineno),
                format!("duplicate id `{}`", ex.id()),
            ));
        }
        out.push(ex);
    }
    Ok(out)
}

pub fn ingest(path: impl AsRef<Path>) -> Result<Vec<TaskExample>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text)
}

/// Normalized JSONL: every record with its id, options without labels.
pub fn write_dataset(examples: &[TaskExample], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for ex in examples {
        out.push_str(&serde_json::to_string(&ex.to_record())?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Task names in order of first appearance.
pub fn task_order(examples: &[TaskExample]) -> Vec<String> {
    let mut seen = Vec::<String>::new();
    for ex in examples {
        if !seen.iter().any(|t| t == ex.task()) {
            seen.push(ex.task().to_string());
        }
    }
    seen
}

pub fn task_counts(examples: &[TaskExample]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for ex in examples {
        *counts.entry(ex.task().to_string()).or_default() += 1;
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<TaskExample>,
    pub test: Vec<TaskExample>,
}

/// Per-task seeded shuffle; `floor(n * train_fraction)` of each task go to
/// training. Within each part examples keep their file order.
pub fn split(examples: &[TaskExample], spec: SplitSpec) -> Result<Split> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train_fraction {} not in (0, 1)",
            spec.train_fraction
        )));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for task in task_order(examples) {
        let members: Vec<&TaskExample> = examples.iter().filter(|e| e.task() == task).collect();
        let n = members.len();
        if n < 2 {
            return Err(Error::TinyTask {
                task,
                count: n,
                required: 2,
            });
        }
        let n_train = (n as f64 * spec.train_fraction + 1e-9).floor() as usize;
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ fnv1a(task.as_bytes()));
        order.shuffle(&mut rng);
        let mut in_train = vec![false; n];
        for &i in &order[..n_train] {
            in_train[i] = true;
        }
        for (i, ex) in members.into_iter().enumerate() {
            if in_train[i] {
                train.push(ex.clone())
            } else {
                test.push(ex.clone())
            }
        }
    }
    Ok(Split { train, test })
}

/// SHA-256 over the sorted example ids.
pub fn membership_hash(examples: &[TaskExample]) -> String {
    let mut ids: Vec<&str> = examples.iter().map(TaskExample::id).collect();
    ids.sort_unstable();
    let mut h = Sha256::new();
    for id in ids {
        h.update(id.as_bytes());
        h.update(b"\n");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
