use std::collections::HashMap;
use std::hash::Hash;

use super::StatsError;

/// Share of annotators that chose the modal label.
pub fn variation_ratio_agreement<S: Eq + Hash>(annotations: &[S]) -> Result<f64, StatsError> {
    if annotations.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut counts: HashMap<&S, usize> = HashMap::new();
    for a in annotations {
        *counts.entry(a).or_default() += 1;
    }
    let mode = counts.values().copied().max().unwrap_or(0);
    Ok(mode as f64 / annotations.len() as f64)
}
