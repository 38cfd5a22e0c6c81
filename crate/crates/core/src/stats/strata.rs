use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::pvi::ScoredInstance;

/// Accuracy of the lowest and highest `quantile` share of instances by PVI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileGap {
    pub quantile: f64,
    /// ceil(quantile * N)
    pub stratum_size: usize,
    pub acc_bottom: f64,
    pub acc_top: f64,
    /// acc_top - acc_bottom
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrataReport {
    pub n: usize,
    pub accuracy: f64,
    /// Accuracy over the lowest 20% PVI.
    pub acc_low_pvi: f64,
    /// Accuracy over the highest 20% PVI.
    pub acc_high_pvi: f64,
    /// Mean PVI over correct predictions; `None` when nothing was correct.
    pub mean_pvi_true: Option<f64>,
    /// Mean PVI over incorrect predictions; `None` when nothing was wrong.
    pub mean_pvi_false: Option<f64>,
    pub gaps: Vec<QuantileGap>,
}

impl StrataReport {
    pub fn gap(&self, quantile: f64) -> Option<f64> {
        self.gaps
            .iter()
            .find(|g| (g.quantile - quantile).abs() < 1e-12)
            .map(|g| g.gap)
    }

    pub fn gap_20(&self) -> Option<f64> {
        self.gap(0.2)
    }

    pub fn gap_50(&self) -> Option<f64> {
        self.gap(0.5)
    }

    /// Field-wise arithmetic mean over reports (e.g. one per exemplar set).
    /// Optional means average over the reports where they are present; gaps
    /// average over quantiles present in every report.
    pub fn mean(reports: &[StrataReport]) -> Option<StrataReport> {
        let first = reports.first()?;
        let k = reports.len() as f64;
        let avg = |f: &dyn Fn(&StrataReport) -> f64| reports.iter().map(f).sum::<f64>() / k;
        let avg_opt = |f: &dyn Fn(&StrataReport) -> Option<f64>| {
            let present: Vec<f64> = reports.iter().filter_map(f).collect();
            (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
        };
        let gaps = first
            .gaps
            .iter()
            .filter_map(|g| {
                let matching: Vec<&QuantileGap> = reports
                    .iter()
                    .filter_map(|r| r.gaps.iter().find(|h| h.quantile == g.quantile))
                    .collect();
                (matching.len() == reports.len()).then(|| QuantileGap {
                    quantile: g.quantile,
                    stratum_size: g.stratum_size,
                    acc_bottom: matching.iter().map(|h| h.acc_bottom).sum::<f64>() / k,
                    acc_top: matching.iter().map(|h| h.acc_top).sum::<f64>() / k,
                    gap: matching.iter().map(|h| h.gap).sum::<f64>() / k,
                })
            })
            .collect();
        Some(StrataReport {
            n: reports.iter().map(|r| r.n).sum::<usize>() / reports.len(),
            accuracy: avg(&|r| r.accuracy),
            acc_low_pvi: avg(&|r| r.acc_low_pvi),
            acc_high_pvi: avg(&|r| r.acc_high_pvi),
            mean_pvi_true: avg_opt(&|r| r.mean_pvi_true),
            mean_pvi_false: avg_opt(&|r| r.mean_pvi_false),
            gaps,
        })
    }
}

fn stratum_size(quantile: f64, n: usize) -> usize {
    // tolerate representation error, e.g. 0.2 * 15
    ((quantile * n as f64) - 1e-9).ceil().max(0.0) as usize
}

fn accuracy(records: &[&ScoredInstance]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().filter(|r| r.correct).count() as f64 / records.len() as f64
}

/// PVI-stratified accuracy. Records are ordered by ascending PVI with ties
/// broken by instance id; the bottom stratum is the first ceil(qN) records
/// and the top stratum the last ceil(qN).
pub fn strata_report(scored: &[ScoredInstance], quantiles: &[f64]) -> Result<StrataReport, StatsError> {
    if scored.is_empty() {
        return Err(StatsError::Empty);
    }
    if scored.iter().any(|s| !s.pvi_bits.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    if let Some(bad) = quantiles.iter().find(|q| !(**q > 0.0 && **q <= 0.5)) {
        return Err(StatsError::InvalidQuantile(*bad));
    }
    let mut sorted: Vec<&ScoredInstance> = scored.iter().collect();
    sorted.sort_by(|a, b| {
        a.pvi_bits
            .total_cmp(&b.pvi_bits)
            .then_with(|| a.instance_id.cmp(&b.instance_id))
    });
    let n = sorted.len();
    let gap_at = |q: f64| {
        let size = stratum_size(q, n);
        let acc_bottom = accuracy(&sorted[..size]);
        let acc_top = accuracy(&sorted[n - size..]);
        QuantileGap {
            quantile: q,
            stratum_size: size,
            acc_bottom,
            acc_top,
            gap: acc_top - acc_bottom,
        }
    };
    let low_high = gap_at(0.2);
    let mean_where = |correct: bool| {
        let vals: Vec<f64> = scored
            .iter()
            .filter(|s| s.correct == correct)
            .map(|s| s.pvi_bits)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    Ok(StrataReport {
        n,
        accuracy: accuracy(&sorted),
        acc_low_pvi: low_high.acc_bottom,
        acc_high_pvi: low_high.acc_top,
        mean_pvi_true: mean_where(true),
        mean_pvi_false: mean_where(false),
        gaps: quantiles.iter().map(|&q| gap_at(q)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(id: &str, pvi: f64, correct: bool) -> ScoredInstance {
        ScoredInstance {
            instance_id: id.to_string(),
            gold_label: "a".into(),
            logp_null_bits: -1.0,
            logp_input_bits: pvi - 1.0,
            pvi_bits: pvi,
            predicted_label: if correct { "a" } else { "b" }.into(),
            correct,
            floored: false,
        }
    }

    #[test]
    fn constructed_strata() {
        // 10 records; the lowest two are wrong, the highest two right
        let records: Vec<_> = (0..10)
            .map(|i| rec(&format!("r{i}"), i as f64, i >= 2 && (i >= 8 || i % 2 == 0)))
            .collect();
        let rep = strata_report(&records, &[0.2]).unwrap();
        assert_eq!(rep.acc_low_pvi, 0.0);
        assert_eq!(rep.acc_high_pvi, 1.0);
        assert_eq!(rep.gap_20(), Some(1.0));
    }

    #[test]
    fn means_by_correctness() {
        let records: Vec<_> = (1..=5).map(|i| rec(&i.to_string(), i as f64, true)).collect();
        let rep = strata_report(&records, &[0.2, 0.5]).unwrap();
        assert_eq!(rep.mean_pvi_true, Some(3.0));
        assert_eq!(rep.mean_pvi_false, None);
        assert_eq!(rep.accuracy, 1.0);
    }

    #[test]
    fn twenty_record_fixture() {
        // pvi = i for ids r01..r20; correct at
        //   i = 3 6 8 9 | 11 12 14 15 16 17 18 19 20
        // bottom 10: 4 correct -> 0.4; top 10: 9 correct -> 0.9; gap_50 = 0.5
        // bottom 4: {3} -> 0.25; top 4: all -> 1.0; gap_20 = 0.75
        // accuracy 13/20; mean true = 168/13; mean false = (1+2+4+5+7+10+13)/7 = 6
        let correct = [3, 6, 8, 9, 11, 12, 14, 15, 16, 17, 18, 19, 20];
        let records: Vec<_> = (1..=20)
            .rev()
            .map(|i| rec(&format!("r{i:02}"), i as f64, correct.contains(&i)))
            .collect();
        let rep = strata_report(&records, &[0.2, 0.5]).unwrap();
        assert!((rep.gap_50().unwrap() - 0.5).abs() < 1e-12);
        assert!((rep.gap_20().unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(rep.acc_low_pvi, 0.25);
        assert_eq!(rep.acc_high_pvi, 1.0);
        assert_eq!(rep.accuracy, 0.65);
        assert!((rep.mean_pvi_true.unwrap() - 168.0 / 13.0).abs() < 1e-12);
        assert_eq!(rep.mean_pvi_false, Some(6.0));
        assert_eq!(rep.gaps[1].stratum_size, 10);
    }

    #[test]
    fn ties_broken_by_id() {
        // equal PVI everywhere: strata follow id order
        let records = vec![rec("c", 0.0, true), rec("a", 0.0, false), rec("b", 0.0, true), rec("d", 0.0, true), rec("e", 0.0, false)];
        let rep = strata_report(&records, &[0.2]).unwrap();
        assert_eq!(rep.acc_low_pvi, 0.0); // "a"
        assert_eq!(rep.acc_high_pvi, 0.0); // "e"
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(strata_report(&[], &[0.2]), Err(StatsError::Empty));
        let r = [rec("a", 1.0, true)];
        assert_eq!(strata_report(&r, &[0.6]), Err(StatsError::InvalidQuantile(0.6)));
        assert_eq!(strata_report(&r, &[0.0]), Err(StatsError::InvalidQuantile(0.0)));
    }

    #[test]
    fn stratum_rounding() {
        assert_eq!(stratum_size(0.2, 10), 2);
        assert_eq!(stratum_size(0.2, 15), 3);
        assert_eq!(stratum_size(0.2, 11), 3);
        assert_eq!(stratum_size(0.5, 277), 139);
    }

    #[test]
    fn mean_over_runs() {
        let a = strata_report(&[rec("x", 1.0, true), rec("y", 0.0, false)], &[0.5]).unwrap();
        let b = strata_report(&[rec("x", 1.0, true), rec("y", 0.0, true)], &[0.5]).unwrap();
        let m = StrataReport::mean(&[a, b]).unwrap();
        assert_eq!(m.accuracy, 0.75);
        assert_eq!(m.mean_pvi_false, Some(0.0));
        assert_eq!(m.gap(0.5), Some(0.5));
    }

    proptest! {
        #[test]
        fn strata_disjoint(pvis in prop::collection::vec((-10.0f64..10.0, any::<bool>()), 2..60), q in 0.01f64..=0.5) {
            let records: Vec<_> = pvis.iter().enumerate().map(|(i, (p, c))| rec(&format!("{i:03}"), *p, *c)).collect();
            let n = records.len();
            let size = stratum_size(q, n);
            prop_assume!(2 * size <= n);
            let rep = strata_report(&records, &[q]).unwrap();
            prop_assert!((0.0..=1.0).contains(&rep.gaps[0].acc_bottom));
            prop_assert!((0.0..=1.0).contains(&rep.gaps[0].acc_top));
            prop_assert_eq!(rep.gaps[0].stratum_size, size);
        }
    }
}
