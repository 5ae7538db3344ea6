//! Global collection of graded attempts with exact cosine retrieval.
//!
//! A store holds either mistakes (one entry per failed query, accumulating
//! distinct wrong answers) or correct answers for the few-shot baseline.
//! Retrieval keeps entries whose key similarity is at least `theta`, sorted
//! by similarity with ties in insertion order, truncated to `k`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embed::{cosine, Embedding, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::types::{ContextItem, FeedbackNote};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Mistakes,
    Correct,
}

impl Polarity {
    pub fn name(self) -> &'static str {
        match self {
            Polarity::Mistakes => "mistakes",
            Polarity::Correct => "correct",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MistakeEntry<F: Scalar = f64> {
    pub key: String,
    pub key_embedding: Embedding<F>,
    pub target: String,
    pub wrong_answers: Vec<String>,
    pub guideline: Option<FeedbackNote>,
    pub task: String,
}

impl<F: Scalar> MistakeEntry<F> {
    pub fn context_item(&self, similarity: F) -> ContextItem {
        ContextItem {
            query: self.key.clone(),
            target: self.target.clone(),
            wrong_answers: self.wrong_answers.clone(),
            guideline: self.guideline.as_ref().map(|g| g.guideline.clone()),
            similarity: similarity.as_f64(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Store<F: Scalar = f64> {
    entries: Vec<MistakeEntry<F>>,
    polarity: Polarity,
    dim: usize,
}

/// A retrieval hit: entry index plus similarity to the query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit<F: Scalar = f64> {
    pub index: usize,
    pub similarity: F,
}

impl<F: Scalar> Store<F> {
    pub fn new(polarity: Polarity, dim: usize) -> Self {
        Self {
            entries: Vec::new(),
            polarity,
            dim,
        }
    }

    pub fn entries(&self) -> &[MistakeEntry<F>] {
        &self.entries
    }

    pub fn polarity(&self) -> Polarity {
        self.polarity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn position(&self, key: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.key == key)
    }

    pub fn get(&self, key: &str) -> Option<&MistakeEntry<F>> {
        self.position(key).map(|i| &self.entries[i])
    }

    fn expect(&self, polarity: Polarity) -> Result<()> {
        if self.polarity != polarity {
            return Err(Error::PolarityMismatch {
                expected: polarity.name(),
                actual: self.polarity.name(),
            });
        }
        Ok(())
    }

    fn check_provider(&self, provider: &dyn EmbeddingProvider<F>) -> Result<()> {
        if provider.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: provider.dim(),
            });
        }
        Ok(())
    }

    /// Records a wrong answer for `query`. Returns `true` if the store changed.
    pub fn insert_mistake(
        &mut self,
        provider: &dyn EmbeddingProvider<F>,
        query: &str,
        target: &str,
        wrong: &str,
        task: &str,
    ) -> Result<bool> {
        self.expect(Polarity::Mistakes)?;
        let wrong = wrong.trim();
        if query.trim().is_empty() || wrong.is_empty() {
            return Err(Error::InvalidEntry(
                "query and wrong answer must be non-empty".into(),
            ));
        }
        if wrong == target.trim() {
            return Err(Error::InvalidEntry("wrong answer equals the target".into()));
        }
        if let Some(i) = self.position(query) {
            let entry = &mut self.entries[i];
            if entry.wrong_answers.iter().any(|w| w == wrong) {
                return Ok(false);
            }
            entry.wrong_answers.push(wrong.to_string());
            return Ok(true);
        }
        self.check_provider(provider)?;
        let key_embedding = provider.embed(query)?;
        self.entries.push(MistakeEntry {
            key: query.to_string(),
            key_embedding,
            target: target.to_string(),
            wrong_answers: vec![wrong.to_string()],
            guideline: None,
            task: task.to_string(),
        });
        Ok(true)
    }

    /// Records a query the model answered correctly. Returns `true` if new.
    pub fn insert_correct(
        &mut self,
        provider: &dyn EmbeddingProvider<F>,
        query: &str,
        target: &str,
        task: &str,
    ) -> Result<bool> {
        self.expect(Polarity::Correct)?;
        if query.trim().is_empty() {
            return Err(Error::InvalidEntry("query must be non-empty".into()));
        }
        if self.position(query).is_some() {
            return Ok(false);
        }
        self.check_provider(provider)?;
        let key_embedding = provider.embed(query)?;
        self.entries.push(MistakeEntry {
            key: query.to_string(),
            key_embedding,
            target: target.to_string(),
            wrong_answers: Vec::new(),
            guideline: None,
            task: task.to_string(),
        });
        Ok(true)
    }

    pub fn set_guideline(&mut self, index: usize, note: FeedbackNote) {
        self.entries[index].guideline = Some(note);
    }

    /// Nearest entries to an already-embedded query.
    pub fn search(&self, query: &Embedding<F>, k: usize, theta: F) -> Result<Vec<Hit<F>>> {
        if query.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: query.dim(),
            });
        }
        let mut hits = Vec::new();
        for (index, e) in self.entries.iter().enumerate() {
            let similarity = cosine(query, &e.key_embedding)?;
            if similarity >= theta {
                hits.push(Hit { index, similarity });
            }
        }
        // Stable sort keeps insertion order among equal similarities.
        hits.sort_by(|a, b| {
            b.similarity
                .partial_cmp(&a.similarity)
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        hits.truncate(k);
        Ok(hits)
    }

    pub fn retrieve(
        &self,
        provider: &dyn EmbeddingProvider<F>,
        query: &str,
        k: usize,
        theta: F,
    ) -> Result<Vec<ContextItem>> {
        if self.entries.is_empty() || k == 0 {
            return Ok(Vec::new());
        }
        self.check_provider(provider)?;
        let q = provider.embed(query)?;
        Ok(self
            .search(&q, k, theta)?
            .into_iter()
            .map(|h| self.entries[h.index].context_item(h.similarity))
            .collect())
    }

    pub fn to_jsonl(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for e in &self.entries {
            serde_json::to_writer(&mut out, &StoredEntry::from(e))?;
            out.push(b'\n');
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(&self.to_jsonl()?)
            .map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a JSONL store written by [`Store::save`]; `dim` is the
    /// dimension of the session's embedding provider.
    pub fn load(path: impl AsRef<Path>, polarity: Polarity, dim: usize) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut store = Store::new(polarity, dim);
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            store.push_stored(&line, i + 1)?;
        }
        Ok(store)
    }

    fn push_stored(&mut self, line: &str, lineno: usize) -> Result<()> {
        let corrupt = |reason: String| Error::CorruptLine {
            line: lineno,
            reason,
        };
        let raw: StoredEntry<F> = serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))?;
        if raw.v != SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: raw.v,
                expected: SCHEMA_VERSION,
            });
        }
        if raw.embedding.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: raw.embedding.len(),
            });
        }
        let key_embedding =
            Embedding::from_unit(raw.embedding).map_err(|e| corrupt(e.to_string()))?;
        match self.polarity {
            Polarity::Mistakes if raw.wrong.is_empty() => {
                return Err(corrupt("mistake entry without wrong answers".into()));
            }
            Polarity::Correct if !raw.wrong.is_empty() => {
                return Err(corrupt("correct-answer entry carries wrong answers".into()));
            }
            _ => {}
        }
        let mut seen = std::collections::HashSet::new();
        if raw
            .wrong
            .iter()
            .any(|w| !seen.insert(w.as_str()) || *w == raw.target)
        {
            return Err(corrupt(
                "duplicate wrong answer or wrong answer equal to target".into(),
            ));
        }
        if self.position(&raw.key).is_some() {
            return Err(corrupt(format!("duplicate key `{}`", raw.key)));
        }
        if let Some(note) = &raw.guideline {
            if note.guideline.trim().is_empty() {
                return Err(corrupt("empty guideline".into()));
            }
        }
        self.entries.push(MistakeEntry {
            key: raw.key,
            key_embedding,
            target: raw.target,
            wrong_answers: raw.wrong,
            guideline: raw.guideline,
            task: raw.task,
        });
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
struct StoredEntry<F: Scalar> {
    key: String,
    task: String,
    target: String,
    wrong: Vec<String>,
    guideline: Option<FeedbackNote>,
    embedding: Vec<F>,
    v: u64,
}

impl<F: Scalar> From<&MistakeEntry<F>> for StoredEntry<F> {
    fn from(e: &MistakeEntry<F>) -> Self {
        Self {
            key: e.key.clone(),
            task: e.task.clone(),
            target: e.target.clone(),
            wrong: e.wrong_answers.clone(),
            guideline: e.guideline.clone(),
            embedding: e.key_embedding.values().to_vec(),
            v: SCHEMA_VERSION,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashingEmbedder;

    const JANE: &str =
        "Jane thought today is 3/11/2002, but today is in fact Mar 12, which is 1 day later. \
                        What is the date a month ago in MM/DD/YYYY?";

    fn emb() -> HashingEmbedder {
        HashingEmbedder::default()
    }

    fn mistakes() -> Store {
        Store::new(Polarity::Mistakes, 256)
    }

    #[test]
    fn insert_into_empty_store() {
        let mut s = mistakes();
        assert!(s
            .insert_mistake(&emb(), JANE, "02/12/2002", "02/11/2002", "date")
            .unwrap());
        assert_eq!(s.len(), 1);
        assert_eq!(s.entries()[0].wrong_answers, vec!["02/11/2002"]);
        assert_eq!(s.entries()[0].target, "02/12/2002");
    }

    #[test]
    fn repeated_insert_is_idempotent() {
        let mut s = mistakes();
        s.insert_mistake(&emb(), JANE, "02/12/2002", "02/11/2002", "date")
            .unwrap();
        let before = s.clone();
        assert!(!s
            .insert_mistake(&emb(), JANE, "02/12/2002", " 02/11/2002 ", "date")
            .unwrap());
        assert_eq!(s, before);
    }

    #[test]
    fn two_wrong_answers_share_one_entry() {
        let mut s = mistakes();
        s.insert_mistake(&emb(), JANE, "02/12/2002", "02/11/2002", "date")
            .unwrap();
        s.insert_mistake(&emb(), JANE, "ignored", "03/11/2002", "date")
            .unwrap();
        let expected = MistakeEntry {
            key: JANE.to_string(),
            key_embedding: EmbeddingProvider::<f64>::embed(&emb(), JANE).unwrap(),
            target: "02/12/2002".into(),
            wrong_answers: vec!["02/11/2002".into(), "03/11/2002".into()],
            guideline: None,
            task: "date".into(),
        };
        assert_eq!(s.entries(), &[expected]);
    }

    #[test]
    fn polarity_and_dim_are_checked() {
        let mut c: Store = Store::new(Polarity::Correct, 256);
        assert!(matches!(
            c.insert_mistake(&emb(), JANE, "a", "b", "t"),
            Err(Error::PolarityMismatch { .. })
        ));
        let mut s = mistakes();
        assert!(matches!(
            s.insert_mistake(&HashingEmbedder::with_dim(384), JANE, "a", "b", "t"),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(s.insert_mistake(&emb(), JANE, "a", "a", "t").is_err());
    }

    #[test]
    fn empty_store_retrieves_nothing() {
        assert!(mistakes()
            .retrieve(&emb(), JANE, 3, 0.0)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn self_retrieval() {
        let mut s = mistakes();
        s.insert_mistake(&emb(), "who was acting recklessly", "(C)", "(A)", "age")
            .unwrap();
        s.insert_mistake(&emb(), JANE, "02/12/2002", "02/11/2002", "date")
            .unwrap();
        let got = s.retrieve(&emb(), JANE, 1, 0.99).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].query, JANE);
        assert!((got[0].similarity - 1.0).abs() < 1e-6);
    }

    #[test]
    fn ties_keep_insertion_order() {
        let mut s = mistakes();
        // Same token multiset, different keys: identical embeddings.
        s.insert_mistake(&emb(), "b a", "t", "w", "x").unwrap();
        s.insert_mistake(&emb(), "a b", "t", "w", "x").unwrap();
        let got = s.retrieve(&emb(), "a b", 2, 0.0).unwrap();
        assert_eq!(got[0].query, "b a");
        assert_eq!(got[1].query, "a b");
    }

    #[test]
    fn top3_of_five_matches_exhaustive_scan() {
        let keys = [
            "the chief told the counselor that they took the day off",
            "the manager sent a message to the secretary",
            "bailey will plan to meet the director at his office",
            "the patient was referred to the specialist",
            "the chief told the secretary that they took a message",
        ];
        let mut s = mistakes();
        for k in keys {
            s.insert_mistake(&emb(), k, "(A)", "(B)", "dq").unwrap();
        }
        let query = "the chief told the manager that they took the day off";
        let q: Embedding = emb().embed(query).unwrap();
        let mut oracle: Vec<(f64, usize)> = keys
            .iter()
            .enumerate()
            .map(|(i, k)| {
                let e: Embedding = emb().embed(k).unwrap();
                let dot: f64 = q.values().iter().zip(e.values()).map(|(a, b)| a * b).sum();
                (dot, i)
            })
            .filter(|(d, _)| *d >= 0.0)
            .collect();
        oracle.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        oracle.truncate(3);
        let got = s.retrieve(&emb(), query, 3, 0.0).unwrap();
        let got_keys: Vec<&str> = got.iter().map(|c| c.query.as_str()).collect();
        let want: Vec<&str> = oracle.iter().map(|(_, i)| keys[*i]).collect();
        assert_eq!(got_keys, want);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        let mut s = mistakes();
        s.insert_mistake(&emb(), JANE, "02/12/2002", "02/11/2002", "date")
            .unwrap();
        s.insert_mistake(&emb(), "q two", "(A) x", "(B)", "t")
            .unwrap();
        s.insert_mistake(&emb(), "q three", "(C) z", "(A)", "t")
            .unwrap();
        s.set_guideline(1, FeedbackNote::new("because", "look closer").unwrap());
        s.save(&path).unwrap();
        let loaded = Store::load(&path, Polarity::Mistakes, 256).unwrap();
        assert_eq!(loaded, s);
    }

    #[test]
    fn load_reports_corrupt_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        let mut s = mistakes();
        s.insert_mistake(&emb(), "q one", "t", "w", "x").unwrap();
        let mut bytes = s.to_jsonl().unwrap();
        bytes.extend_from_slice(b"{not json\n");
        std::fs::write(&path, bytes).unwrap();
        match Store::<f64>::load(&path, Polarity::Mistakes, 256) {
            Err(Error::CorruptLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn load_rejects_other_dimension_and_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        let mut s = mistakes();
        s.insert_mistake(&emb(), "q one", "t", "w", "x").unwrap();
        s.save(&path).unwrap();
        assert!(matches!(
            Store::<f64>::load(&path, Polarity::Mistakes, 384),
            Err(Error::DimensionMismatch {
                expected: 384,
                actual: 256
            })
        ));
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"v\":1", "\"v\":2");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            Store::<f64>::load(&path, Polarity::Mistakes, 256),
            Err(Error::SchemaVersion { found: 2, .. })
        ));
    }

    #[test]
    fn f32_store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store32.jsonl");
        let mut s: Store<f32> = Store::new(Polarity::Correct, 256);
        s.insert_correct(&emb(), "what is two plus two", "(B) 4", "math")
            .unwrap();
        s.save(&path).unwrap();
        assert_eq!(
            Store::<f32>::load(&path, Polarity::Correct, 256).unwrap(),
            s
        );
    }
}
