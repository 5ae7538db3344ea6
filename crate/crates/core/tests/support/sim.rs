//! Synthetic datasets and scripted rulesets for end-to-end simulations.
//!
//! Examples come in families: members of a family share a long question
//! and differ in one token, so they embed close together, while different
//! families share almost nothing. The assistant writes one guideline per
//! family and the student answers correctly only when a prompt opens with
//! its family's guideline and no other guideline follows it.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use salam_core::backends::{MatchKind, Ruleset, ScriptedBackend, ScriptedRule};
use salam_core::embed::{EmbeddingProvider, HashingEmbedder};
use salam_core::{make_example, RawRecord, TaskExample};

pub const QUESTION_WORDS: usize = 150;
pub const WRONG_REPLY: &str = "(A)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Family {
    pub task: usize,
    pub index: usize,
}

impl Family {
    pub fn new(task: usize, index: usize) -> Self {
        Self { task, index }
    }

    pub fn tag(&self) -> String {
        format!("t{}f{}", self.task, self.index)
    }

    /// Gold is never the first option, so the unguided reply is wrong.
    pub fn gold(&self) -> usize {
        1 + self.index % 2
    }

    pub fn options(&self) -> Vec<String> {
        let tag = self.tag();
        vec![
            format!("Person {tag} one"),
            format!("Person {tag} two"),
            format!("Nobody in case {tag}"),
        ]
    }

    pub fn guideline(&self) -> String {
        format!(
            "Rule for case {}: check every stated fact before picking a person.",
            self.tag()
        )
    }

    pub fn question(&self, variant: usize) -> String {
        format!(
            "Case {} item {variant}: {}?",
            self.tag(),
            self.words().join(" ")
        )
    }

    /// Random lowercase words seeded by the family. Hashes of
    /// near-identical strings share low bits, so patterned words would
    /// correlate across families.
    pub fn words(&self) -> Vec<String> {
        let mut rng = ChaCha8Rng::seed_from_u64(((self.task as u64) << 32) | self.index as u64);
        (0..QUESTION_WORDS)
            .map(|_| {
                (0..7)
                    .map(|_| char::from(b'a' + rng.gen_range(0..26u8)))
                    .collect()
            })
            .collect()
    }

    pub fn example(&self, task_name: &str, variant: usize) -> TaskExample {
        make_example(RawRecord {
            id: Some(format!("{}-v{variant}", self.tag())),
            task: task_name.to_string(),
            question: self.question(variant),
            options: self.options(),
            answer: self.gold(),
        })
        .unwrap()
    }

    pub fn of(example: &TaskExample) -> Family {
        let tag = example.id().split('-').next().unwrap();
        let (t, f) = tag[1..].split_once('f').unwrap();
        Family::new(t.parse().unwrap(), f.parse().unwrap())
    }
}

/// Student: guided by its own family's guideline alone it answers the gold
/// content; a second guideline after it distracts it; otherwise it says (A).
pub fn student(families: &[Family]) -> ScriptedBackend {
    ScriptedBackend::named("scripted:student", student_rules(families))
}

pub fn student_rules(families: &[Family]) -> Ruleset {
    let mut rules = Vec::new();
    for f in families {
        let g = f.guideline();
        rules.push(ScriptedRule::new(
            MatchKind::Prefix,
            format!("{g}\n\nRule for case "),
            WRONG_REPLY,
            2,
        ));
        rules.push(ScriptedRule::new(
            MatchKind::Prefix,
            format!("{g}\n\n"),
            f.options()[f.gold()].clone(),
            1,
        ));
    }
    Ruleset {
        rules,
        default: Some(WRONG_REPLY.into()),
    }
}

/// Assistant: one JSON feedback reply per family, keyed on a family word.
pub fn assistant(families: &[Family]) -> ScriptedBackend {
    ScriptedBackend::named("scripted:assistant", assistant_rules(families))
}

pub fn assistant_rules(families: &[Family]) -> Ruleset {
    let rules = families
        .iter()
        .map(|f| {
            let reply = serde_json::json!({
                "Explanation": format!("The model guessed without reading case {}.", f.tag()),
                "Guideline": f.guideline(),
            });
            ScriptedRule::new(
                MatchKind::Substring,
                format!(" {} ", f.words()[0]),
                reply.to_string(),
                0,
            )
        })
        .collect();
    Ruleset {
        rules,
        default: None,
    }
}

pub const GATED_TASKS: [&str; 2] = ["Age", "Nationality"];

/// Two tasks of 50 examples: ten families of four plus ten singletons each.
pub fn gated_dataset() -> (Vec<TaskExample>, Vec<Family>) {
    let mut examples = Vec::new();
    let mut families = Vec::new();
    for (t, name) in GATED_TASKS.iter().enumerate() {
        for f in 0..20 {
            let fam = Family::new(t, f);
            families.push(fam);
            let size = if f < 10 { 4 } else { 1 };
            for v in 0..size {
                examples.push(fam.example(name, v));
            }
        }
    }
    (examples, families)
}

/// Exhaustive cosine scan: (entry family, similarity) of every train
/// example, most similar first, ties by position.
pub fn scan(query: &TaskExample, train: &[TaskExample]) -> Vec<(Family, f64)> {
    let e = HashingEmbedder::default();
    let q: salam_core::Embedding = e.embed(&query.query_block()).unwrap();
    let mut sims: Vec<(usize, Family, f64)> = train
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let v: salam_core::Embedding = e.embed(&t.query_block()).unwrap();
            let dot: f64 = q.values().iter().zip(v.values()).map(|(a, b)| a * b).sum();
            (i, Family::of(t), dot)
        })
        .collect();
    sims.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then(a.0.cmp(&b.0)));
    sims.into_iter().map(|(_, f, s)| (f, s)).collect()
}

/// Analytic outcome for the scripted student: correct iff the retrieved
/// set is non-empty and holds only the query's own family.
pub fn guided_outcome(query: &TaskExample, train: &[TaskExample], k: usize, theta: f64) -> bool {
    let own = Family::of(query);
    let hits: Vec<Family> = scan(query, train)
        .into_iter()
        .filter(|(_, s)| *s >= theta)
        .take(k)
        .map(|(f, _)| f)
        .collect();
    !hits.is_empty() && hits.iter().all(|f| *f == own)
}

/// Sweep setup: family `f` has `1 + f % 4` training members and one test
/// member, so exactly the families with at least `k` members stay
/// undistracted at top-k.
pub fn distraction_sets(families: usize) -> (Vec<TaskExample>, Vec<TaskExample>, Vec<Family>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut fams = Vec::new();
    for f in 0..families {
        let fam = Family::new(0, f);
        fams.push(fam);
        for v in 0..train_members(f) {
            train.push(fam.example("Sweep", v));
        }
        test.push(fam.example("Sweep", 99));
    }
    (train, test, fams)
}

pub fn train_members(f: usize) -> usize {
    1 + f % 4
}
