//! Orchestration for in-context PVI experiments: experiment configs, the
//! `score`, `analyze` and `select` commands, and their on-disk layout.

pub mod analyze;
pub mod config;
pub mod score;
pub mod select;

pub use analyze::{run_analyze, Analysis, AnalyzeOptions};
pub use config::{ExperimentConfig, Overrides, Split};
pub use score::{run_score, ScoreReport};
pub use select::run_select;
