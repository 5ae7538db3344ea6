use proptest::prelude::*;
use salam_core::embed::{EmbeddingProvider, HashingEmbedder};
use salam_core::harness::parse_dataset;
use salam_core::memory::Polarity;
use salam_core::types::FeedbackNote;
use salam_core::{make_example, RawRecord, Store};

const VOCAB: [&str; 16] = [
    "who",
    "was",
    "late",
    "the",
    "doctor",
    "nurse",
    "cannot",
    "be",
    "determined",
    "grandmother",
    "son",
    "today",
    "date",
    "tomorrow",
    "friend",
    "office",
];

fn text() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(&VOCAB[..]), 1..8).prop_map(|w| w.join(" "))
}

fn build(keys: &[String], annotate: &[bool]) -> Store {
    let e = HashingEmbedder::default();
    let mut s = Store::new(Polarity::Mistakes, 256);
    for (i, k) in keys.iter().enumerate() {
        s.insert_mistake(&e, k, "(B) nurse", &format!("(A) wrong {i}"), "t")
            .unwrap();
    }
    for (i, &a) in annotate.iter().enumerate().take(s.len()) {
        if a {
            s.set_guideline(
                i,
                FeedbackNote::new(format!("why {i}"), format!("check {i}")).unwrap(),
            );
        }
    }
    s
}

/// Exhaustive scan: similarities recomputed from raw components, filtered,
/// ordered by similarity then position.
fn oracle(store: &Store, query: &str, k: usize, theta: f64) -> Vec<String> {
    let q: salam_core::Embedding = HashingEmbedder::default().embed(query).unwrap();
    let mut all: Vec<(usize, f64)> = store
        .entries()
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let mut dot = 0.0;
            for (a, b) in q.values().iter().zip(e.key_embedding.values()) {
                dot += a * b;
            }
            (i, dot)
        })
        .filter(|(_, s)| *s >= theta)
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.into_iter()
        .take(k)
        .map(|(i, _)| store.entries()[i].key.clone())
        .collect()
}

fn retrieved(store: &Store, query: &str, k: usize, theta: f64) -> Vec<String> {
    store
        .retrieve(&HashingEmbedder::default(), query, k, theta)
        .unwrap()
        .into_iter()
        .map(|c| c.query)
        .collect()
}

proptest! {
    #[test]
    fn retrieval_matches_exhaustive_scan(keys in prop::collection::vec(text(), 0..100), query in text()) {
        let store = build(&keys, &[]);
        for k in [1, 3, 10] {
            for theta in [0.0, 0.5, 0.9] {
                prop_assert_eq!(retrieved(&store, &query, k, theta), oracle(&store, &query, k, theta));
            }
        }
    }

    #[test]
    fn raising_theta_shrinks_results(keys in prop::collection::vec(text(), 1..60), query in text()) {
        let store = build(&keys, &[]);
        let thetas = [-1.0, 0.0, 0.25, 0.5, 0.75, 0.9, 1.0];
        for k in [1, 3, 10] {
            let sizes: Vec<usize> = thetas.iter().map(|&t| retrieved(&store, &query, k, t).len()).collect();
            prop_assert!(sizes.windows(2).all(|w| w[0] >= w[1]), "{:?}", sizes);
        }
        for w in thetas.windows(2) {
            let low = retrieved(&store, &query, usize::MAX, w[0]);
            let high = retrieved(&store, &query, usize::MAX, w[1]);
            prop_assert!(high.iter().all(|h| low.contains(h)));
        }
    }

    #[test]
    fn store_round_trips(keys in prop::collection::vec(text(), 0..40), annotate in prop::collection::vec(any::<bool>(), 40)) {
        let store = build(&keys, &annotate);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        store.save(&path).unwrap();
        let back = Store::load(&path, Polarity::Mistakes, 256).unwrap();
        prop_assert_eq!(back, store);
    }

    #[test]
    fn arbitrary_records_never_panic(
        task in ".{0,8}",
        question in ".{0,40}",
        options in prop::collection::vec(".{0,12}", 0..30),
        answer in 0usize..32,
    ) {
        let raw = RawRecord { id: None, task, question, options: options.clone(), answer };
        if let Ok(ex) = make_example(raw) {
            prop_assert!(ex.options().len() >= 2 && ex.options().len() <= 26);
            prop_assert!(ex.answer_index() < ex.options().len());
            prop_assert_eq!(ex.options().len(), options.len());
        }
    }

    #[test]
    fn arbitrary_dataset_text_never_panics(text in "(\\PC|\n){0,200}") {
        let _ = parse_dataset(&text);
    }
}
