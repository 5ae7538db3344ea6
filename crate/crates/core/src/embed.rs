//! Sentence embeddings and cosine similarity.
//!
//! [`HashingEmbedder`] is an offline provider whose similarity tracks lexical
//! overlap: every whitespace token is hashed into a signed bucket and the
//! count vector is L2-normalized. [`RemoteEmbedder`] talks to an embedding
//! service.

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::http::{HttpSettings, JsonClient};
use crate::scalar::Scalar;

pub const DEFAULT_DIM: usize = 256;
pub const NORM_TOLERANCE: f64 = 1e-6;
/// Looser bound used when validating stored vectors of either precision.
const STORED_NORM_TOLERANCE: f64 = 1e-5;

/// Unit-norm embedding vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<F: Scalar = f64> {
    values: Vec<F>,
}

impl<F: Scalar> Embedding<F> {
    /// Normalizes `values` to unit length.
    pub fn normalized(values: Vec<F>) -> Result<Self> {
        let norm = values
            .iter()
            .fold(0.0f64, |acc, v| acc + v.as_f64() * v.as_f64())
            .sqrt();
        if values.is_empty() || norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidEntry("embedding has no direction".into()));
        }
        let values = values
            .into_iter()
            .map(|v| F::from_f64_lossy(v.as_f64() / norm))
            .collect();
        Ok(Self { values })
    }

    /// Takes `values` as-is after checking they are already unit length.
    pub fn from_unit(values: Vec<F>) -> Result<Self> {
        let norm = values
            .iter()
            .fold(0.0f64, |acc, v| acc + v.as_f64() * v.as_f64())
            .sqrt();
        if values.is_empty() || (norm - 1.0).abs() > STORED_NORM_TOLERANCE {
            return Err(Error::InvalidEntry(format!(
                "embedding norm {norm} is not 1"
            )));
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn norm(&self) -> F {
        self.values
            .iter()
            .fold(F::zero(), |acc, &v| acc + v * v)
            .sqrt()
    }
}

/// Dot product of two unit vectors.
pub fn cosine<F: Scalar>(a: &Embedding<F>, b: &Embedding<F>) -> Result<F> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(a.values
        .iter()
        .zip(&b.values)
        .fold(F::zero(), |acc, (&x, &y)| acc + x * y))
}

pub trait EmbeddingProvider<F: Scalar>: Send + Sync {
    fn dim(&self) -> usize;

    /// Identifier recorded in run reports.
    fn id(&self) -> String;

    fn embed(&self, text: &str) -> Result<Embedding<F>>;
}

pub(crate) const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
pub(crate) const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// Lowercased whitespace tokens with outer ASCII punctuation removed.
pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace()
        .map(|t| {
            t.trim_matches(|c: char| c.is_ascii_punctuation())
                .to_lowercase()
        })
        .filter(|t| !t.is_empty())
}

#[derive(Debug, Clone, Copy)]
pub struct HashingEmbedder {
    dim: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self { dim: DEFAULT_DIM }
    }
}

impl HashingEmbedder {
    pub fn with_dim(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Bucket and sign for one token: bucket is the hash modulo the
    /// dimension, the sign comes from the top bit.
    pub fn slot(&self, token: &str) -> (usize, f64) {
        let h = fnv1a(token.as_bytes());
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        ((h % self.dim as u64) as usize, sign)
    }
}

impl<F: Scalar> EmbeddingProvider<F> for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn id(&self) -> String {
        format!("hash-{}", self.dim)
    }

    fn embed(&self, text: &str) -> Result<Embedding<F>> {
        if text.trim().is_empty() {
            return Err(Error::EmptyText);
        }
        let mut counts = vec![0.0f64; self.dim];
        for tok in tokens(text) {
            let (bucket, sign) = self.slot(&tok);
            counts[bucket] += sign;
        }
        let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm == 0.0 {
            // Only punctuation, or every token cancelled out.
            return Err(Error::EmptyText);
        }
        Ok(Embedding {
            values: counts
                .into_iter()
                .map(|c| F::from_f64_lossy(c / norm))
                .collect(),
        })
    }
}

/// Client for `POST {base}/embeddings` with body `{"input":[..],"model":..}`.
pub struct RemoteEmbedder {
    client: JsonClient,
    model: String,
    dim: usize,
}

impl RemoteEmbedder {
    pub fn new(settings: HttpSettings, model: impl Into<String>, dim: usize) -> Result<Self> {
        Ok(Self {
            client: JsonClient::new(settings)?,
            model: model.into(),
            dim,
        })
    }

    pub fn embed_many<F: Scalar>(&self, texts: &[&str]) -> Result<Vec<Embedding<F>>> {
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(Error::EmptyText);
        }
        let body = json!({ "input": texts, "model": self.model });
        let resp = self.client.post("embeddings", &body)?;
        let data = resp
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::ProviderUnavailable("response lacks `data`".into()))?;
        if data.len() != texts.len() {
            return Err(Error::ProviderUnavailable(format!(
                "asked for {} embeddings, got {}",
                texts.len(),
                data.len()
            )));
        }
        data.iter()
            .map(|item| {
                let raw = item
                    .get("embedding")
                    .and_then(Value::as_array)
                    .ok_or_else(|| Error::ProviderUnavailable("item lacks `embedding`".into()))?;
                let values = raw
                    .iter()
                    .map(|v| v.as_f64().map(F::from_f64_lossy))
                    .collect::<Option<Vec<F>>>()
                    .ok_or_else(|| Error::ProviderUnavailable("non-numeric embedding".into()))?;
                if values.len() != self.dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim,
                        actual: values.len(),
                    });
                }
                Embedding::normalized(values)
            })
            .collect()
    }
}

impl<F: Scalar> EmbeddingProvider<F> for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn id(&self) -> String {
        format!("remote:{}@{}", self.model, self.client.base_url())
    }

    fn embed(&self, text: &str) -> Result<Embedding<F>> {
        Ok(self.embed_many(&[text])?.remove(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::stub::Stub;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn hash() -> HashingEmbedder {
        HashingEmbedder::default()
    }

    #[test]
    fn deterministic_and_unit_norm() {
        let a: Embedding = hash().embed("abc").unwrap();
        let b: Embedding = hash().embed("abc").unwrap();
        assert_eq!(
            a.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(a.dim(), 256);
        assert!((a.norm() - 1.0).abs() < NORM_TOLERANCE);
    }

    #[test]
    fn single_token_by_hand() {
        // FNV-1a of "abc", computed byte by byte.
        let mut h: u64 = 0xcbf29ce484222325;
        for b in *b"abc" {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        assert_eq!(h, 0xe71fa2190541574b);
        let bucket = (h % 256) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        let e: Embedding = hash().embed("abc").unwrap();
        for (i, v) in e.values().iter().enumerate() {
            let expected = if i == bucket { sign } else { 0.0 };
            assert_eq!(*v, expected, "component {i}");
        }
    }

    #[test]
    fn empty_text_rejected() {
        assert!(matches!(
            EmbeddingProvider::<f64>::embed(&hash(), ""),
            Err(Error::EmptyText)
        ));
        assert!(matches!(
            EmbeddingProvider::<f64>::embed(&hash(), "  \n"),
            Err(Error::EmptyText)
        ));
    }

    #[test]
    fn cosine_basics() {
        let e1 = Embedding::<f64>::from_unit(vec![1.0, 0.0, 0.0]).unwrap();
        let e2 = Embedding::<f64>::from_unit(vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(cosine(&e1, &e2).unwrap(), 0.0);
        let v: Embedding = hash().embed("the quick brown fox").unwrap();
        assert_abs_diff_eq!(cosine(&v, &v).unwrap(), 1.0, epsilon = 1e-6);
        let short = Embedding::<f64>::from_unit(vec![1.0]).unwrap();
        assert!(matches!(
            cosine(&v, &short),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn cosine_matches_componentwise_dot() {
        let a: Embedding = hash().embed("today is 3/11/2002").unwrap();
        let b: Embedding = hash().embed("today is 3/12/2002").unwrap();
        let mut dot = 0.0;
        for i in 0..a.dim() {
            dot += a.values()[i] * b.values()[i];
        }
        assert_eq!(cosine(&a, &b).unwrap(), dot);
        // Two of three tokens shared.
        assert!(dot > 0.5 && dot < 1.0, "{dot}");
    }

    #[test]
    fn f32_embeddings() {
        let a: Embedding<f32> = hash().embed("who was acting recklessly").unwrap();
        assert!((a.norm() - 1.0).abs() < 1e-6);
        assert_abs_diff_eq!(cosine(&a, &a).unwrap(), 1.0f32, epsilon = 1e-6);
    }

    #[test]
    fn remote_embedder_renormalizes() {
        let stub = Stub::serve(vec![(200, r#"{"data":[{"embedding":[3.0,4.0]}]}"#.into())]);
        let mut s = HttpSettings::new(stub.url.clone());
        s.api_key = Some("secret".into());
        let emb = RemoteEmbedder::new(s, "mini", 2).unwrap();
        let e: Embedding = emb.embed("hello").unwrap();
        assert_abs_diff_eq!(e.values()[0], 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(e.values()[1], 0.8, epsilon = 1e-12);
        let reqs = stub.join();
        let body: Value = serde_json::from_str(&reqs[0]).unwrap();
        assert_eq!(body, json!({"input": ["hello"], "model": "mini"}));
    }

    proptest! {
        #[test]
        fn cosine_is_symmetric(a in "[a-z ]{1,30}[a-z]", b in "[a-z ]{1,30}[a-z]") {
            let ea: Embedding = hash().embed(&a).unwrap_or_else(|_| Embedding::from_unit(vec![1.0; 1]).unwrap());
            let eb: Embedding = hash().embed(&b).unwrap_or_else(|_| Embedding::from_unit(vec![1.0; 1]).unwrap());
            if ea.dim() == eb.dim() {
                prop_assert_eq!(cosine(&ea, &eb).unwrap(), cosine(&eb, &ea).unwrap());
                let c = cosine(&ea, &eb).unwrap();
                prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&c));
            }
        }
    }
}
