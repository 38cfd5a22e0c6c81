//! The `score` subcommand: one scoring run per cell of the seed × shots grid.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use icpvi_core::prompting::{default_shot_counts, sample_exemplars};
use icpvi_core::pvi::{accuracy, score_run, write_manifest, write_scores_csv, write_scores_jsonl, RunManifest};
use icpvi_core::{Dataset, ExemplarSet, Instance, PromptTemplate, RunConfig, Scorer};
use serde::{Deserialize, Serialize};

use crate::config::{BackendSpec, DatasetSpec, ExperimentConfig, Split};

/// Where a run's inputs came from, echoed into its manifest so that later
/// analyses can reload the dataset and the run can be repeated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSource {
    pub dataset: DatasetSpec,
    pub template: PathBuf,
    pub backend: BackendSpec,
    pub split: Split,
    pub head: Option<usize>,
    pub exemplar_file: Option<PathBuf>,
}

impl RunSource {
    pub fn from_manifest(manifest: &RunManifest) -> Result<Self> {
        serde_json::from_value(manifest.source.clone()).context("manifest has no usable `source` section")
    }
}

#[derive(Debug, Clone)]
pub enum CellPlan {
    Sampled { seed: u64, shots: usize },
    Fixed { name: String, exemplars: ExemplarSet },
}

impl CellPlan {
    /// Train-split cells get a `_train` suffix so they never overwrite the
    /// test-split cell with the same exemplars.
    pub fn dir_name(&self, split: Split) -> String {
        let base = match self {
            CellPlan::Sampled { seed, shots } => format!("{shots}shot_seed{seed}"),
            CellPlan::Fixed { name, exemplars } => format!("{}shot_{name}", exemplars.shots()),
        };
        match split {
            Split::Test => base,
            Split::Train => format!("{base}_train"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub n_instances: usize,
    pub accuracy: Option<f64>,
    pub n_floored: usize,
}

#[derive(Debug)]
pub struct CellOutcome {
    pub dir: PathBuf,
    pub result: Result<CellSummary>,
}

#[derive(Debug, Default)]
pub struct ScoreReport {
    pub cells: Vec<CellOutcome>,
}

impl ScoreReport {
    pub fn failed(&self) -> usize {
        self.cells.iter().filter(|c| c.result.is_err()).count()
    }
}

/// Path-safe form of a dataset or model name.
pub fn path_component(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

/// Reads an exemplar file and resolves its ids against the training split.
pub fn load_exemplar_file(path: &Path, dataset: &Dataset) -> Result<ExemplarSet> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let set: ExemplarSet =
        serde_json::from_str(&text).with_context(|| format!("parsing exemplar file {}", path.display()))?;
    let exemplars = set
        .exemplars
        .iter()
        .map(|e| {
            dataset
                .train_instance(&e.id)
                .cloned()
                .ok_or_else(|| anyhow!("exemplar `{}` is not in the training split", e.id))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExemplarSet::new(set.seed, exemplars))
}

pub fn plan_cells(config: &ExperimentConfig, dataset: &Dataset) -> Result<Vec<CellPlan>> {
    if let Some(path) = &config.exemplar_file {
        let exemplars = load_exemplar_file(path, dataset)?;
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .map(path_component)
            .unwrap_or_else(|| "exemplars".into());
        return Ok(vec![CellPlan::Fixed { name, exemplars }]);
    }
    let shots = config
        .shots
        .clone()
        .unwrap_or_else(|| default_shot_counts(&dataset.label_space, config.min_shots_floor));
    let mut cells = Vec::new();
    for &s in &shots {
        for &seed in &config.seeds {
            cells.push(CellPlan::Sampled { seed, shots: s });
        }
    }
    Ok(cells)
}

/// The dataset whose `test` split is scored. For the training split the
/// exemplars are left out of the scored set, since scoring an instance
/// with itself in the prompt would leak its label.
fn scored_view(dataset: &Dataset, exemplars: &ExemplarSet, split: Split, head: Option<usize>) -> Result<Dataset> {
    let view = match split {
        Split::Test => dataset.clone(),
        Split::Train => {
            let rest: Vec<Instance> = dataset
                .train
                .iter()
                .filter(|i| !exemplars.contains_id(&i.id))
                .cloned()
                .collect();
            Dataset::new(
                dataset.name.clone(),
                dataset.label_space.clone(),
                exemplars.exemplars.clone(),
                rest,
            )?
        }
    };
    Ok(match head {
        Some(n) => view.head(n),
        None => view,
    })
}

pub fn source_of(config: &ExperimentConfig) -> RunSource {
    RunSource {
        dataset: config.dataset.clone(),
        template: config.template.clone(),
        backend: config.backend.clone(),
        split: config.split,
        head: config.head,
        exemplar_file: config.exemplar_file.clone(),
    }
}

fn run_cell(
    config: &ExperimentConfig,
    dataset: &Dataset,
    template: &PromptTemplate,
    scorer: &dyn Scorer,
    plan: &CellPlan,
    dir: &Path,
) -> Result<CellSummary> {
    let exemplars = match plan {
        CellPlan::Sampled { seed, shots } => sample_exemplars(dataset, *shots, *seed, config.balanced)?,
        CellPlan::Fixed { exemplars, .. } => exemplars.clone(),
    };
    let view = scored_view(dataset, &exemplars, config.split, config.head)?;
    let mut run = RunConfig::new(&dataset.name, &config.model_id, &exemplars, template);
    run.top_k = config.top_k;
    run.policy = config.missing_logprob;
    run.max_in_flight = config.max_in_flight;
    let scored = score_run(&view, &exemplars, template, scorer, &run)?;

    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_scores_jsonl(&dir.join("scores.jsonl"), &scored)?;
    write_scores_csv(&dir.join("scores.csv"), &scored)?;
    let mut manifest = RunManifest::new(&run, config.split.as_str(), &exemplars, &scored);
    manifest.source = serde_json::to_value(source_of(config))?;
    write_manifest(&dir.join("manifest.json"), &manifest)?;
    Ok(CellSummary {
        n_instances: scored.len(),
        accuracy: accuracy(&scored),
        n_floored: manifest.n_floored,
    })
}

/// Scores every cell with `scorer`. A failing cell is recorded and the
/// remaining cells still run. Errors before the grid starts (unreadable
/// dataset or template) are returned directly.
pub fn run_score(config: &ExperimentConfig, scorer: &dyn Scorer) -> Result<ScoreReport> {
    config.validate()?;
    let dataset = config.dataset.load()?;
    if config.split == Split::Train && dataset.train.is_empty() {
        bail!("split `train` requested but dataset `{}` has no training file", dataset.name);
    }
    let template = config.load_template(&dataset)?;
    let base = config
        .output_dir
        .join(path_component(&dataset.name))
        .join(path_component(&config.model_id));
    let mut report = ScoreReport::default();
    for plan in plan_cells(config, &dataset)? {
        let dir = base.join(plan.dir_name(config.split));
        log::info!("scoring {}", dir.display());
        let result = run_cell(config, &dataset, &template, scorer, &plan, &dir);
        if let Err(e) = &result {
            log::error!("{}: {e:#}", dir.display());
        }
        report.cells.push(CellOutcome { dir, result });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_path_safe() {
        assert_eq!(path_component("org/model:v1"), "org_model_v1");
        assert_eq!(path_component("gpt-3.5_x"), "gpt-3.5_x");
    }

    #[test]
    fn cell_dir_names() {
        let sampled = CellPlan::Sampled { seed: 2, shots: 4 };
        assert_eq!(sampled.dir_name(Split::Test), "4shot_seed2");
        assert_eq!(sampled.dir_name(Split::Train), "4shot_seed2_train");
        let fixed = CellPlan::Fixed {
            name: "hardest".into(),
            exemplars: ExemplarSet::new(None, Vec::new()),
        };
        assert_eq!(fixed.dir_name(Split::Test), "0shot_hardest");
    }

    #[test]
    fn train_view_excludes_exemplars() {
        let labels = icpvi_core::LabelSpace::new(["a", "b"]).unwrap();
        let train = (0..6)
            .map(|i| Instance::new(format!("t{i}"), [("x", "v")], if i % 2 == 0 { "a" } else { "b" }))
            .collect::<Vec<_>>();
        let ds = Dataset::new("d", labels, train.clone(), Vec::new()).unwrap();
        let ex = ExemplarSet::new(Some(0), vec![train[0].clone(), train[3].clone()]);
        let view = scored_view(&ds, &ex, Split::Train, None).unwrap();
        let ids: Vec<_> = view.test.iter().map(|i| i.id.as_str()).collect();
        assert_eq!(ids, ["t1", "t2", "t4", "t5"]);
        assert_eq!(scored_view(&ds, &ex, Split::Train, Some(2)).unwrap().test.len(), 2);
    }
}
