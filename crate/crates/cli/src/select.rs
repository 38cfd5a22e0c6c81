//! The `select` subcommand: hardest-per-label exemplars from a training run.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use icpvi_core::pvi::{read_manifest, read_scores_jsonl};
use icpvi_core::selection::{rank_hardness, select_hardest_exemplars};
use icpvi_core::ExemplarSet;

use crate::score::RunSource;

#[derive(Debug)]
pub struct SelectOutput {
    pub exemplars: ExemplarSet,
    pub exemplar_file: PathBuf,
    pub ranking_file: PathBuf,
}

/// Ranks the training instances scored in `run_dir` and writes
/// `exemplars.json` (accepted by `score` as `exemplar_file`) and
/// `ranking.csv` into `out_dir`.
pub fn run_select(run_dir: &Path, per_label: usize, out_dir: &Path) -> Result<SelectOutput> {
    if per_label == 0 {
        bail!("per_label must be at least 1");
    }
    let manifest = read_manifest(&run_dir.join("manifest.json"))?;
    if manifest.scored_split != "train" {
        bail!(
            "{} scored the `{}` split; selection needs a run with `split: train`",
            run_dir.display(),
            manifest.scored_split
        );
    }
    let scored = read_scores_jsonl(&run_dir.join("scores.jsonl"))?;
    let dataset = RunSource::from_manifest(&manifest)?.dataset.load()?;
    let ranking = rank_hardness(&scored, &dataset)?;
    let exemplars = select_hardest_exemplars(&ranking, per_label)?;

    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let exemplar_file = out_dir.join("exemplars.json");
    let mut bytes = serde_json::to_vec_pretty(&exemplars)?;
    bytes.push(b'\n');
    fs::write(&exemplar_file, bytes)?;
    let ranking_file = out_dir.join("ranking.csv");
    ranking.write_csv(File::create(&ranking_file)?)?;
    Ok(SelectOutput {
        exemplars,
        exemplar_file,
        ranking_file,
    })
}
