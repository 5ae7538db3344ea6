//! Learning from mistakes for multi-choice question answering.
//!
//! A main model answers training queries; wrong answers are graded and kept
//! in a retrievable [`memory::Store`]. A study-assistant model explains each
//! mistake and writes a guideline, and at inference the guidelines of
//! similar past mistakes are prepended to new queries.
//!
//! Embeddings and similarity scores are generic over [`Scalar`] (`f32` or
//! `f64`); the unsuffixed aliases use `f64`.

pub mod assistant;
pub mod backends;
pub mod embed;
pub mod error;
pub mod grader;
pub mod harness;
pub mod http;
pub mod memory;
pub mod orchestrator;
pub mod scalar;
pub mod student;
pub mod types;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use student::PromptMode;
pub use types::{
    make_example, AssistState, Attempt, ContextItem, FeedbackNote, RawRecord, RewardRecord,
    TaskExample,
};

pub type Embedding = embed::Embedding<f64>;
pub type Embedding32 = embed::Embedding<f32>;
pub type Store = memory::Store<f64>;
pub type Store32 = memory::Store<f32>;
pub type MistakeEntry = memory::MistakeEntry<f64>;
pub type MistakeEntry32 = memory::MistakeEntry<f32>;
