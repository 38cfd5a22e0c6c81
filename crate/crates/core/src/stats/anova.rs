use serde::{Deserialize, Serialize};

use super::special::f_survival;
use super::{check_finite, mean, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    /// +inf when all within-group variance is zero but group means differ.
    pub f_statistic: f64,
    pub p_value: f64,
    pub df_between: usize,
    pub df_within: usize,
}

/// One-way analysis of variance across `groups`.
pub fn anova_oneway<G: AsRef<[f64]>>(groups: &[G]) -> Result<AnovaResult, StatsError> {
    let k = groups.len();
    if k < 2 {
        return Err(StatsError::TooFewGroups(k));
    }
    for (index, g) in groups.iter().enumerate() {
        let len = g.as_ref().len();
        if len < 2 {
            return Err(StatsError::GroupTooSmall { index, len });
        }
        check_finite(g.as_ref())?;
    }
    let n_total: usize = groups.iter().map(|g| g.as_ref().len()).sum();
    let means: Vec<f64> = groups.iter().map(|g| mean(g.as_ref())).collect();

    // Identical group means give exactly zero between-group variance, even
    // when the pooled grand mean picks up rounding error.
    let ss_between = if means.iter().all(|m| *m == means[0]) {
        0.0
    } else {
        let grand = groups
            .iter()
            .zip(&means)
            .map(|(g, m)| g.as_ref().len() as f64 * m)
            .sum::<f64>()
            / n_total as f64;
        groups
            .iter()
            .zip(&means)
            .map(|(g, m)| g.as_ref().len() as f64 * (m - grand).powi(2))
            .sum::<f64>()
    };
    let ss_within: f64 = groups
        .iter()
        .zip(&means)
        .map(|(g, m)| g.as_ref().iter().map(|v| (v - m).powi(2)).sum::<f64>())
        .sum();

    let df_between = k - 1;
    let df_within = n_total - k;
    let ms_between = ss_between / df_between as f64;
    let ms_within = ss_within / df_within as f64;
    let (f_statistic, p_value) = if ms_within == 0.0 {
        if ms_between == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY, 0.0)
        }
    } else {
        let f = ms_between / ms_within;
        (f, f_survival(f, df_between as f64, df_within as f64))
    };
    Ok(AnovaResult {
        f_statistic,
        p_value,
        df_between,
        df_within,
    })
}
