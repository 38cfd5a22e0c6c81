//! Statistics for validating PVI as a hardness measure.

mod agreement;
mod anova;
mod consistency;
mod correlation;
mod histogram;
pub mod special;
mod strata;

pub use agreement::variation_ratio_agreement;
pub use anova::{anova_oneway, AnovaResult};
pub use consistency::{consistency_matrix, ConsistencyMatrix, ConsistencySummary, RunPvi};
pub use correlation::{mean_correlation, pearson, CorrelationResult};
pub use histogram::{histogram, Histogram, HistogramBin};
pub use strata::{strata_report, QuantileGap, StrataReport};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("correlation is undefined for a constant input")]
    UndefinedCorrelation,
    #[error("need at least 2 groups, got {0}")]
    TooFewGroups(usize),
    #[error("group {index} has {len} values, need at least 2")]
    GroupTooSmall { index: usize, len: usize },
    #[error("input is empty")]
    Empty,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("quantile {0} is outside (0, 0.5]")]
    InvalidQuantile(f64),
    #[error("bin count must be at least 1")]
    InvalidBins,
    #[error("runs are not aligned by instance id; offending ids: {0:?}")]
    Misaligned(Vec<String>),
    #[error("duplicate instance id `{0}` in run `{1}`")]
    DuplicateId(String, String),
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn check_finite(xs: &[f64]) -> Result<(), StatsError> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite)
    }
}
