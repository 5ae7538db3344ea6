use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::harness::dataset::membership_hash;
use crate::student::PromptMode;
use crate::types::{Attempt, RewardRecord, TaskExample};

/// Run configuration recorded with every report; keys mirror CLI flags.
pub type ConfigSnapshot = BTreeMap<String, Value>;

/// Accuracy per task and across tasks. Accuracies are `None` when nothing
/// was evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: PromptMode,
    pub per_task: BTreeMap<String, Option<f64>>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    /// Unweighted mean over tasks.
    pub average: Option<f64>,
    pub examples: usize,
    pub test_membership: String,
    pub config: ConfigSnapshot,
    pub rewards: Vec<RewardRecord>,
}

impl EvalReport {
    pub fn from_attempts(
        mode: PromptMode,
        examples: &[TaskExample],
        attempts: &[Attempt],
        config: ConfigSnapshot,
    ) -> Self {
        let task_of: HashMap<&str, &str> = examples.iter().map(|e| (e.id(), e.task())).collect();
        let mut tally: BTreeMap<String, (usize, usize)> = BTreeMap::new();
        for a in attempts {
            let task = task_of
                .get(a.example_id.as_str())
                .copied()
                .unwrap_or("unknown");
            let t = tally.entry(task.to_string()).or_default();
            t.0 += usize::from(a.passed);
            t.1 += 1;
        }
        let per_task: BTreeMap<String, Option<f64>> = tally
            .into_iter()
            .map(|(k, (ok, n))| (k, Some(ok as f64 / n as f64)))
            .collect();
        let mut report = EvalReport {
            mode,
            per_task,
            min: None,
            max: None,
            average: None,
            examples: attempts.len(),
            test_membership: membership_hash(examples),
            config,
            rewards: attempts.iter().map(RewardRecord::from).collect(),
        };
        report.recompute_summary();
        report
    }

    pub fn recompute_summary(&mut self) {
        let accs: Vec<f64> = self.per_task.values().flatten().copied().collect();
        if accs.is_empty() {
            (self.min, self.max, self.average) = (None, None, None);
            return;
        }
        self.min = accs.iter().copied().reduce(f64::min);
        self.max = accs.iter().copied().reduce(f64::max);
        self.average = Some(accs.iter().sum::<f64>() / accs.len() as f64);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

fn pct(v: Option<f64>) -> String {
    v.map(|v| format!("{:.1}", v * 100.0))
        .unwrap_or_else(|| "n/a".into())
}

/// Aligned table: one row per task, one column per report.
pub fn render_table(reports: &[EvalReport]) -> String {
    let mut tasks: Vec<&String> = reports.iter().flat_map(|r| r.per_task.keys()).collect();
    tasks.sort();
    tasks.dedup();
    let width = tasks
        .iter()
        .map(|t| t.len())
        .chain(["average".len()])
        .max()
        .unwrap_or(0);
    let cols: Vec<usize> = reports.iter().map(|r| r.mode.name().len().max(6)).collect();

    let mut out = String::new();
    let _ = write!(out, "{:<width$}", "task");
    for (r, w) in reports.iter().zip(&cols) {
        let _ = write!(out, "  {:>w$}", r.mode.name());
    }
    out.push('\n');
    let mut row = |label: &str, pick: &dyn Fn(&EvalReport) -> Option<f64>| {
        let _ = write!(out, "{label:<width$}");
        for (r, w) in reports.iter().zip(&cols) {
            let _ = write!(out, "  {:>w$}", pct(pick(r)));
        }
        out.push('\n');
    };
    for t in &tasks {
        row(t, &|r| r.per_task.get(*t).copied().flatten());
    }
    row("min", &|r| r.min);
    row("max", &|r| r.max);
    row("average", &|r| r.average);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub value: f64,
    pub mode: PromptMode,
    pub accuracy: Option<f64>,
}

pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("value,mode,accuracy\n");
    for p in points {
        let acc = p.accuracy.map(|a| a.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{}", p.value, p.mode, acc);
    }
    out
}
