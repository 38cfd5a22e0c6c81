use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{pearson, CorrelationResult, StatsError};

/// PVI estimates of one run, keyed by instance id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunPvi {
    pub label: String,
    pub ids: Vec<String>,
    pub pvi: Vec<f64>,
}

impl RunPvi {
    pub fn new(label: impl Into<String>, ids: Vec<String>, pvi: Vec<f64>) -> Self {
        RunPvi {
            label: label.into(),
            ids,
            pvi,
        }
    }
}

/// Summary over the off-diagonal pairs with a defined correlation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencySummary {
    pub pairs: usize,
    /// Pairs skipped because one side was constant.
    pub undefined_pairs: usize,
    pub mean_r: Option<f64>,
    pub median_r: Option<f64>,
    pub frac_strong: Option<f64>,
    pub frac_weak: Option<f64>,
    /// Which correlations entered the summary.
    pub population: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyMatrix {
    pub labels: Vec<String>,
    /// Symmetric; `None` where the correlation is undefined.
    pub cells: Vec<Vec<Option<CorrelationResult>>>,
    pub summary: ConsistencySummary,
}

pub const STRONG_R: f64 = 0.6;
pub const WEAK_R: f64 = 0.3;

/// Pairwise Pearson correlation between runs, aligned by instance id (the
/// first run's order is used). Every run must cover exactly the same ids.
pub fn consistency_matrix(runs: &[RunPvi]) -> Result<ConsistencyMatrix, StatsError> {
    let Some(first) = runs.first() else {
        return Err(StatsError::Empty);
    };
    let mut aligned: Vec<Vec<f64>> = Vec::with_capacity(runs.len());
    let reference: BTreeSet<&str> = first.ids.iter().map(String::as_str).collect();
    for run in runs {
        if run.ids.len() != run.pvi.len() {
            return Err(StatsError::LengthMismatch {
                left: run.ids.len(),
                right: run.pvi.len(),
            });
        }
        let mut by_id: HashMap<&str, f64> = HashMap::with_capacity(run.ids.len());
        for (id, v) in run.ids.iter().zip(&run.pvi) {
            if by_id.insert(id.as_str(), *v).is_some() {
                return Err(StatsError::DuplicateId(id.clone(), run.label.clone()));
            }
        }
        let these: BTreeSet<&str> = by_id.keys().copied().collect();
        let offenders: Vec<String> = reference
            .symmetric_difference(&these)
            .map(|s| s.to_string())
            .collect();
        if !offenders.is_empty() {
            return Err(StatsError::Misaligned(offenders));
        }
        aligned.push(first.ids.iter().map(|id| by_id[id.as_str()]).collect());
    }

    let k = runs.len();
    let n = first.ids.len();
    let mut cells = vec![vec![None; k]; k];
    let mut rs = Vec::new();
    let mut undefined = 0;
    for i in 0..k {
        cells[i][i] = Some(CorrelationResult { r: 1.0, p_value: 0.0, n });
        for j in (i + 1)..k {
            match pearson(&aligned[i], &aligned[j]) {
                Ok(c) => {
                    rs.push(c.r);
                    cells[i][j] = Some(c);
                    cells[j][i] = Some(c);
                }
                Err(StatsError::UndefinedCorrelation) => undefined += 1,
                Err(e) => return Err(e),
            }
        }
    }

    let pairs = rs.len();
    let frac = |pred: &dyn Fn(f64) -> bool| {
        (pairs > 0).then(|| rs.iter().filter(|r| pred(**r)).count() as f64 / pairs as f64)
    };
    let summary = ConsistencySummary {
        pairs,
        undefined_pairs: undefined,
        mean_r: (pairs > 0).then(|| rs.iter().sum::<f64>() / pairs as f64),
        median_r: median(&rs),
        frac_strong: frac(&|r| r > STRONG_R),
        frac_weak: frac(&|r| r < WEAK_R),
        population: format!(
            "{pairs} off-diagonal pairs among {k} runs over {n} shared instances"
        ),
    };
    Ok(ConsistencyMatrix {
        labels: runs.iter().map(|r| r.label.clone()).collect(),
        cells,
        summary,
    })
}

fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}
