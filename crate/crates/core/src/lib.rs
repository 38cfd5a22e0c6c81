//! In-context pointwise V-usable information (PVI).
//!
//! The crate turns a labeled classification dataset into paired few-shot
//! prompts, scores the gold label's index token under both prompts with a
//! log-probability backend, and reports per-instance PVI in bits together
//! with the statistics used to validate it as a hardness measure.
//!
//! Module map:
//!
//! * [`dataset`]: labeled instances, label spaces, JSONL/CSV loading.
//! * [`prompting`]: exemplar sampling and input-target / null-target prompt rendering.
//! * [`backend`]: single-token log-probability scorers (remote, mock) and the on-disk cache.
//! * [`pvi`]: PVI arithmetic and the per-run scoring loop.
//! * [`stats`]: correlation, ANOVA, agreement, PVI strata and histograms.
//! * [`selection`]: hardness ranking and hardest-exemplar selection.
//! * [`synthetic`]: a difficulty-graded mock world for offline runs.

pub mod backend;
pub mod dataset;
pub mod prompting;
pub mod pvi;
pub mod selection;
pub mod stats;
pub mod synthetic;

pub use backend::{LogprobPolicy, ScoreRequest, ScoreResult, Scorer};
pub use dataset::{Dataset, Instance, LabelSpace};
pub use prompting::{ExemplarSet, PromptPair, PromptTemplate};
pub use pvi::{RunConfig, ScoredInstance};
