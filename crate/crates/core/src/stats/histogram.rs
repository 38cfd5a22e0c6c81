use std::io::Write;

use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::pvi::ScoredInstance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub count_correct: usize,
    pub count_incorrect: usize,
}

impl HistogramBin {
    pub fn count(&self) -> usize {
        self.count_correct + self.count_incorrect
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub split_by_correctness: bool,
    pub bins: Vec<HistogramBin>,
}

impl Histogram {
    pub fn counts(&self) -> Vec<usize> {
        self.bins.iter().map(HistogramBin::count).collect()
    }

    /// `bin_left,bin_right,count_correct,count_incorrect` when split by
    /// correctness, otherwise `bin_left,bin_right,count`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        if self.split_by_correctness {
            writer.write_record(["bin_left", "bin_right", "count_correct", "count_incorrect"])?;
            for b in &self.bins {
                writer.write_record([
                    b.left.to_string(),
                    b.right.to_string(),
                    b.count_correct.to_string(),
                    b.count_incorrect.to_string(),
                ])?;
            }
        } else {
            writer.write_record(["bin_left", "bin_right", "count"])?;
            for b in &self.bins {
                writer.write_record([b.left.to_string(), b.right.to_string(), b.count().to_string()])?;
            }
        }
        writer.flush()?;
        Ok(())
    }
}

/// Equal-width bins over `[min_pvi, max_pvi]`; the last bin is closed on the
/// right. A single distinct value yields one bin holding everything.
pub fn histogram(scored: &[ScoredInstance], bins: usize, split_by_correctness: bool) -> Result<Histogram, StatsError> {
    if bins == 0 {
        return Err(StatsError::InvalidBins);
    }
    if scored.is_empty() {
        return Err(StatsError::Empty);
    }
    if scored.iter().any(|s| !s.pvi_bits.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let lo = scored.iter().map(|s| s.pvi_bits).fold(f64::INFINITY, f64::min);
    let hi = scored.iter().map(|s| s.pvi_bits).fold(f64::NEG_INFINITY, f64::max);
    let n_bins = if hi > lo { bins } else { 1 };
    let width = (hi - lo) / n_bins as f64;
    let mut out: Vec<HistogramBin> = (0..n_bins)
        .map(|i| HistogramBin {
            left: lo + width * i as f64,
            right: if i + 1 == n_bins { hi } else { lo + width * (i + 1) as f64 },
            count_correct: 0,
            count_incorrect: 0,
        })
        .collect();
    for s in scored {
        let idx = if width > 0.0 {
            (((s.pvi_bits - lo) / width).floor() as usize).min(n_bins - 1)
        } else {
            0
        };
        if s.correct {
            out[idx].count_correct += 1;
        } else {
            out[idx].count_incorrect += 1;
        }
    }
    Ok(Histogram {
        split_by_correctness,
        bins: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(pvi: f64, correct: bool) -> ScoredInstance {
        ScoredInstance {
            instance_id: format!("{pvi}"),
            gold_label: "a".into(),
            logp_null_bits: -1.0,
            logp_input_bits: -1.0 + pvi,
            pvi_bits: pvi,
            predicted_label: "a".into(),
            correct,
            floored: false,
        }
    }

    #[test]
    fn equal_split() {
        let records: Vec<_> = [0.0, 1.0, 2.0, 3.0].iter().map(|p| rec(*p, true)).collect();
        let h = histogram(&records, 2, false).unwrap();
        assert_eq!(h.counts(), [2, 2]);
        assert_eq!((h.bins[0].left, h.bins[1].right), (0.0, 3.0));
    }

    #[test]
    fn degenerate_range() {
        let records: Vec<_> = (0..5).map(|_| rec(1.5, true)).collect();
        assert_eq!(histogram(&records, 10, false).unwrap().counts(), [5]);
    }

    #[test]
    fn split_series_partition_total() {
        let records: Vec<_> = (0..30).map(|i| rec((i as f64 * 0.37).sin() * 5.0, i % 3 != 0)).collect();
        let h = histogram(&records, 7, true).unwrap();
        assert_eq!(h.counts().iter().sum::<usize>(), 30);
        let wrong: usize = h.bins.iter().map(|b| b.count_incorrect).sum();
        assert_eq!(wrong, 10);
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("bin_left,bin_right,count_correct,count_incorrect\n"));
        assert_eq!(text.lines().count(), 8);
    }

    #[test]
    fn zero_bins_rejected() {
        assert_eq!(histogram(&[rec(0.0, true)], 0, false), Err(StatsError::InvalidBins));
    }
}
