//! Hardness ranking of training instances and hardest-exemplar selection.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, Instance};
use crate::prompting::ExemplarSet;
use crate::pvi::ScoredInstance;

#[derive(Debug, Error, PartialEq)]
pub enum SelectionError {
    #[error("scored instance `{0}` is not in the training split")]
    UnknownId(String),
    #[error("scored instance `{0}` appears more than once")]
    DuplicateId(String),
    #[error("label `{label}` has {available} ranked instances, need {requested}")]
    DeficientLabel {
        label: String,
        requested: usize,
        available: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedInstance {
    pub instance: Instance,
    pub pvi_bits: f64,
}

/// Per-label lists in label-space order, each sorted hardest (lowest PVI)
/// first with ties broken by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardnessRanking {
    pub per_label: Vec<(String, Vec<RankedInstance>)>,
}

impl HardnessRanking {
    pub fn for_label(&self, label: &str) -> Option<&[RankedInstance]> {
        self.per_label
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, v)| v.as_slice())
    }

    /// `label,rank,id,pvi_bits`; rank is 1-based.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["label", "rank", "id", "pvi_bits"])?;
        for (label, ranked) in &self.per_label {
            for (i, r) in ranked.iter().enumerate() {
                writer.write_record([
                    label.clone(),
                    (i + 1).to_string(),
                    r.instance.id.clone(),
                    r.pvi_bits.to_string(),
                ])?;
            }
        }
        writer.flush()?;
        Ok(())
    }
}

/// Groups scored training instances by gold label and sorts each group by
/// ascending PVI.
pub fn rank_hardness(scored_train: &[ScoredInstance], dataset: &Dataset) -> Result<HardnessRanking, SelectionError> {
    let mut per_label: Vec<(String, Vec<RankedInstance>)> = dataset
        .label_space
        .labels()
        .iter()
        .map(|l| (l.clone(), Vec::new()))
        .collect();
    let mut seen = std::collections::HashSet::new();
    for s in scored_train {
        if !seen.insert(s.instance_id.as_str()) {
            return Err(SelectionError::DuplicateId(s.instance_id.clone()));
        }
        let inst = dataset
            .train_instance(&s.instance_id)
            .ok_or_else(|| SelectionError::UnknownId(s.instance_id.clone()))?;
        let slot = dataset
            .label_space
            .index_of(&inst.gold_label)
            .expect("dataset labels validated on construction");
        per_label[slot].1.push(RankedInstance {
            instance: inst.clone(),
            pvi_bits: s.pvi_bits,
        });
    }
    for (_, ranked) in &mut per_label {
        ranked.sort_by(|a, b| {
            a.pvi_bits
                .total_cmp(&b.pvi_bits)
                .then_with(|| a.instance.id.cmp(&b.instance.id))
        });
    }
    Ok(HardnessRanking { per_label })
}

/// The `per_label` hardest instances of every label, in label order and
/// hardest first within a label.
pub fn select_hardest_exemplars(ranking: &HardnessRanking, per_label: usize) -> Result<ExemplarSet, SelectionError> {
    let mut exemplars = Vec::with_capacity(per_label * ranking.per_label.len());
    for (label, ranked) in &ranking.per_label {
        if ranked.len() < per_label {
            return Err(SelectionError::DeficientLabel {
                label: label.clone(),
                requested: per_label,
                available: ranked.len(),
            });
        }
        exemplars.extend(ranked[..per_label].iter().map(|r| r.instance.clone()));
    }
    Ok(ExemplarSet::new(None, exemplars))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::LabelSpace;

    fn scored(id: &str, pvi: f64) -> ScoredInstance {
        ScoredInstance {
            instance_id: id.into(),
            gold_label: String::new(),
            logp_null_bits: -1.0,
            logp_input_bits: pvi - 1.0,
            pvi_bits: pvi,
            predicted_label: String::new(),
            correct: true,
            floored: false,
        }
    }

    fn dataset(specs: &[(&str, &str)], labels: &[&str]) -> Dataset {
        let train = specs
            .iter()
            .map(|(id, label)| Instance::new(*id, [("s", *id)], *label))
            .collect();
        Dataset::new("d", LabelSpace::new(labels.iter().copied()).unwrap(), train, Vec::new()).unwrap()
    }

    #[test]
    fn sorts_per_label() {
        let ds = dataset(&[("a1", "a"), ("a2", "a"), ("b1", "b")], &["a", "b"]);
        let ranking = rank_hardness(&[scored("a2", 1.0), scored("b1", 0.0), scored("a1", -2.0)], &ds).unwrap();
        let a: Vec<_> = ranking.for_label("a").unwrap().iter().map(|r| (r.instance.id.as_str(), r.pvi_bits)).collect();
        assert_eq!(a, [("a1", -2.0), ("a2", 1.0)]);
        assert_eq!(ranking.for_label("b").unwrap()[0].pvi_bits, 0.0);
    }

    #[test]
    fn equal_pvi_orders_by_id() {
        let ds = dataset(&[("c", "a"), ("a", "a"), ("b", "a")], &["a"]);
        let ranking = rank_hardness(&[scored("c", 0.5), scored("a", 0.5), scored("b", 0.5)], &ds).unwrap();
        let ids: Vec<_> = ranking.for_label("a").unwrap().iter().map(|r| r.instance.id.clone()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn unknown_id() {
        let ds = dataset(&[("a1", "a")], &["a"]);
        assert_eq!(
            rank_hardness(&[scored("zz", 0.0)], &ds),
            Err(SelectionError::UnknownId("zz".into()))
        );
    }

    #[test]
    fn selection_counts() {
        let ds = dataset(
            &[("a1", "a"), ("a2", "a"), ("b1", "b"), ("b2", "b"), ("c1", "c")],
            &["a", "b", "c"],
        );
        let all: Vec<_> = ds.train.iter().enumerate().map(|(i, t)| scored(&t.id, i as f64)).collect();
        let ranking = rank_hardness(&all, &ds).unwrap();
        assert_eq!(select_hardest_exemplars(&ranking, 1).unwrap().shots(), 3);
        assert!(matches!(
            select_hardest_exemplars(&ranking, 2),
            Err(SelectionError::DeficientLabel { ref label, .. }) if label == "c"
        ));
        let two = dataset(&[("a1", "a"), ("a2", "a"), ("b1", "b"), ("b2", "b")], &["a", "b"]);
        let all: Vec<_> = two.train.iter().map(|t| scored(&t.id, 0.0)).collect();
        let set = select_hardest_exemplars(&rank_hardness(&all, &two).unwrap(), 2).unwrap();
        assert_eq!(set.ids(), ["a1", "a2", "b1", "b2"]);
        assert_eq!(set.seed, None);
    }

    #[test]
    fn ranking_csv() {
        let ds = dataset(&[("a1", "a"), ("b1", "b")], &["a", "b"]);
        let ranking = rank_hardness(&[scored("a1", -1.5), scored("b1", 2.0)], &ds).unwrap();
        let mut buf = Vec::new();
        ranking.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "label,rank,id,pvi_bits\na,1,a1,-1.5\nb,1,b1,2\n");
    }
}
