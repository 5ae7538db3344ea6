//! Benchmark harness: datasets, splits, experiment protocols and reports.

pub mod dataset;
pub mod experiments;
pub mod report;

pub use dataset::{ingest, membership_hash, parse_dataset, split, Split, SplitSpec};
pub use experiments::{
    build_memories, evaluate_mode, ood_eval, ood_split, pseudo_mistake_eval, run_matrix, sweep,
    sweep_theta, sweep_topk, ExperimentConfig, Memories, PseudoSampler, SweepAxis,
};
pub use report::{curve_csv, render_table, ConfigSnapshot, CurvePoint, EvalReport};
