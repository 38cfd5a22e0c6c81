//! The `analyze` subcommand: reports over the runs found under a directory.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use icpvi_core::pvi::{read_manifest, read_scores_jsonl, RunManifest, ScoredInstance};
use icpvi_core::stats::{
    anova_oneway, consistency_matrix, histogram, mean_correlation, pearson, strata_report,
    variation_ratio_agreement, AnovaResult, ConsistencyMatrix, CorrelationResult, RunPvi, StrataReport,
};
use serde::Serialize;
use walkdir::WalkDir;

use crate::score::RunSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, clap::ValueEnum)]
pub enum Analysis {
    Strata,
    Consistency,
    Anova,
    Agreement,
    Histogram,
}

#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub analyses: Vec<Analysis>,
    /// Defaults to `<run_dir>/analysis`.
    pub out_dir: Option<PathBuf>,
    /// Keep floored instances in correlation and ANOVA inputs.
    pub include_floored: bool,
    pub quantiles: Vec<f64>,
    pub bins: usize,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            analyses: vec![Analysis::Strata, Analysis::Histogram],
            out_dir: None,
            include_floored: false,
            quantiles: vec![0.2, 0.5],
            bins: 20,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedRun {
    /// Path relative to the analyzed directory, `/`-separated.
    pub label: String,
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub scored: Vec<ScoredInstance>,
    /// Dataset name used for grouping; train-split runs are kept apart
    /// from test-split runs as `<name>:train`.
    group_dataset: String,
}

impl LoadedRun {
    fn dataset(&self) -> &str {
        &self.group_dataset
    }

    fn model(&self) -> &str {
        &self.manifest.run.model_id
    }

    fn shots(&self) -> usize {
        self.manifest.run.shots
    }

    fn seed_label(&self) -> String {
        self.manifest
            .run
            .seed
            .map(|s| s.to_string())
            .unwrap_or_else(|| "fixed".into())
    }
}

/// Every run (a directory holding `manifest.json` and `scores.jsonl`)
/// below `root`, in path order.
pub fn load_runs(root: &Path) -> Result<Vec<LoadedRun>> {
    let mut runs = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry?;
        if entry.file_name() != "manifest.json" {
            continue;
        }
        let dir = entry.path().parent().unwrap_or(root).to_path_buf();
        let scores = dir.join("scores.jsonl");
        if !scores.is_file() {
            continue;
        }
        let label = dir
            .strip_prefix(root)
            .unwrap_or(&dir)
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/");
        let manifest = read_manifest(entry.path())?;
        let group_dataset = match manifest.scored_split.as_str() {
            "test" => manifest.run.dataset.clone(),
            split => format!("{}:{split}", manifest.run.dataset),
        };
        runs.push(LoadedRun {
            label: if label.is_empty() { ".".into() } else { label },
            manifest,
            scored: read_scores_jsonl(&scores)?,
            dir,
            group_dataset,
        });
    }
    if runs.is_empty() {
        bail!("no runs (manifest.json + scores.jsonl) under {}", root.display());
    }
    Ok(runs)
}

#[derive(Debug, Default)]
pub struct AnalysisReport {
    pub outputs: Vec<PathBuf>,
}

pub fn run_analyze(run_dir: &Path, options: &AnalyzeOptions) -> Result<AnalysisReport> {
    let runs = load_runs(run_dir)?;
    let out = options.out_dir.clone().unwrap_or_else(|| run_dir.join("analysis"));
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut report = AnalysisReport::default();
    let mut analyses = options.analyses.clone();
    analyses.sort();
    analyses.dedup();
    for analysis in analyses {
        let written = match analysis {
            Analysis::Strata => strata(&runs, options, &out)?,
            Analysis::Histogram => histograms(&runs, options, &out)?,
            Analysis::Consistency => consistency(&runs, options, &out)?,
            Analysis::Anova => anova(&runs, options, &out)?,
            Analysis::Agreement => agreement(&runs, options, &out)?,
        };
        report.outputs.extend(written);
    }
    Ok(report)
}

fn usable<'a>(run: &'a LoadedRun, options: &AnalyzeOptions) -> impl Iterator<Item = &'a ScoredInstance> {
    let keep_floored = options.include_floored;
    run.scored.iter().filter(move |s| keep_floored || !s.floored)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[derive(Serialize)]
struct RunStrata<'a> {
    run: &'a str,
    dataset: &'a str,
    model: &'a str,
    shots: usize,
    seed: String,
    report: StrataReport,
}

#[derive(Serialize)]
struct GroupStrata<'a> {
    dataset: &'a str,
    model: &'a str,
    shots: usize,
    runs: usize,
    mean: StrataReport,
}

fn strata(runs: &[LoadedRun], options: &AnalyzeOptions, out: &Path) -> Result<Vec<PathBuf>> {
    let mut per_run = Vec::new();
    let mut groups: BTreeMap<(&str, &str, usize), Vec<StrataReport>> = BTreeMap::new();
    for run in runs {
        let report = strata_report(&run.scored, &options.quantiles).with_context(|| format!("strata for {}", run.label))?;
        groups
            .entry((run.dataset(), run.model(), run.shots()))
            .or_default()
            .push(report.clone());
        per_run.push(RunStrata {
            run: &run.label,
            dataset: run.dataset(),
            model: run.model(),
            shots: run.shots(),
            seed: run.seed_label(),
            report,
        });
    }
    let grouped: Vec<GroupStrata> = groups
        .into_iter()
        .filter_map(|((dataset, model, shots), reports)| {
            StrataReport::mean(&reports).map(|mean| GroupStrata {
                dataset,
                model,
                shots,
                runs: reports.len(),
                mean,
            })
        })
        .collect();

    let json_path = out.join("strata.json");
    write_json(&json_path, &serde_json::json!({"runs": per_run, "groups": grouped}))?;

    let csv_path = out.join("strata.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record([
        "dataset",
        "model",
        "shots",
        "runs",
        "accuracy",
        "acc_low_pvi",
        "acc_high_pvi",
        "mean_pvi_true",
        "mean_pvi_false",
    ])?;
    for g in &grouped {
        w.write_record([
            g.dataset.to_string(),
            g.model.to_string(),
            g.shots.to_string(),
            g.runs.to_string(),
            g.mean.accuracy.to_string(),
            g.mean.acc_low_pvi.to_string(),
            g.mean.acc_high_pvi.to_string(),
            fmt_opt(g.mean.mean_pvi_true),
            fmt_opt(g.mean.mean_pvi_false),
        ])?;
    }
    w.flush()?;
    Ok(vec![json_path, csv_path])
}

fn histograms(runs: &[LoadedRun], options: &AnalyzeOptions, out: &Path) -> Result<Vec<PathBuf>> {
    let dir = out.join("histograms");
    fs::create_dir_all(&dir)?;
    let mut written = Vec::new();
    for run in runs {
        let h = histogram(&run.scored, options.bins, true).with_context(|| format!("histogram for {}", run.label))?;
        let path = dir.join(format!("{}.csv", run.label.replace('/', "__")));
        h.write_csv(File::create(&path)?)?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Serialize)]
struct ConsistencyGroup {
    /// What varies across the runs of the group.
    varying: &'static str,
    dataset: String,
    /// The values held fixed, e.g. `model=m shots=4`.
    fixed: String,
    matrix: ConsistencyMatrix,
}

/// Drops every id that is floored in any run of the group, so the runs
/// stay aligned. Other id mismatches are left for the matrix to report.
fn aligned_pvis(group: &[&LoadedRun], options: &AnalyzeOptions) -> Vec<RunPvi> {
    let floored: HashSet<&str> = if options.include_floored {
        HashSet::new()
    } else {
        group
            .iter()
            .flat_map(|r| r.scored.iter().filter(|s| s.floored).map(|s| s.instance_id.as_str()))
            .collect()
    };
    group
        .iter()
        .map(|run| {
            let (ids, pvi) = run
                .scored
                .iter()
                .filter(|s| !floored.contains(s.instance_id.as_str()))
                .map(|s| (s.instance_id.clone(), s.pvi_bits))
                .unzip();
            RunPvi::new(run.label.clone(), ids, pvi)
        })
        .collect()
}

fn consistency(runs: &[LoadedRun], options: &AnalyzeOptions, out: &Path) -> Result<Vec<PathBuf>> {
    type Key = (String, String, &'static str);
    let mut groups: BTreeMap<Key, Vec<&LoadedRun>> = BTreeMap::new();
    for run in runs {
        let d = run.dataset().to_string();
        groups
            .entry((d.clone(), format!("model={} shots={}", run.model(), run.shots()), "exemplar_set"))
            .or_default()
            .push(run);
        groups
            .entry((d.clone(), format!("model={} seed={}", run.model(), run.seed_label()), "shots"))
            .or_default()
            .push(run);
        groups
            .entry((d, format!("shots={} seed={}", run.shots(), run.seed_label()), "model"))
            .or_default()
            .push(run);
    }
    let mut results = Vec::new();
    for ((dataset, fixed, varying), group) in groups {
        if group.len() < 2 {
            continue;
        }
        let matrix = consistency_matrix(&aligned_pvis(&group, options))
            .with_context(|| format!("consistency for {dataset} ({fixed})"))?;
        results.push(ConsistencyGroup {
            varying,
            dataset,
            fixed,
            matrix,
        });
    }
    if results.is_empty() {
        bail!("consistency needs at least two comparable runs (same dataset, differing in one of seed, shots or model)");
    }

    let json_path = out.join("consistency.json");
    write_json(&json_path, &results)?;
    let csv_path = out.join("consistency_summary.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record([
        "varying",
        "dataset",
        "fixed",
        "runs",
        "pairs",
        "undefined_pairs",
        "mean_r",
        "median_r",
        "frac_r_above_0.6",
        "frac_r_below_0.3",
    ])?;
    for g in &results {
        let s = &g.matrix.summary;
        w.write_record([
            g.varying.to_string(),
            g.dataset.clone(),
            g.fixed.clone(),
            g.matrix.labels.len().to_string(),
            s.pairs.to_string(),
            s.undefined_pairs.to_string(),
            fmt_opt(s.mean_r),
            fmt_opt(s.median_r),
            fmt_opt(s.frac_strong),
            fmt_opt(s.frac_weak),
        ])?;
    }
    w.flush()?;
    Ok(vec![json_path, csv_path])
}

#[derive(Serialize)]
struct AnovaRow {
    dataset: String,
    model: String,
    shots: usize,
    runs: Vec<String>,
    result: AnovaResult,
}

fn anova(runs: &[LoadedRun], options: &AnalyzeOptions, out: &Path) -> Result<Vec<PathBuf>> {
    let mut groups: BTreeMap<(&str, &str, usize), Vec<&LoadedRun>> = BTreeMap::new();
    for run in runs {
        groups.entry((run.dataset(), run.model(), run.shots())).or_default().push(run);
    }
    let mut rows = Vec::new();
    for ((dataset, model, shots), group) in groups {
        if group.len() < 2 {
            continue;
        }
        let values: Vec<Vec<f64>> = group
            .iter()
            .map(|r| usable(r, options).map(|s| s.pvi_bits).collect())
            .collect();
        let result = anova_oneway(&values).with_context(|| format!("ANOVA for {dataset}/{model}/{shots}-shot"))?;
        rows.push(AnovaRow {
            dataset: dataset.into(),
            model: model.into(),
            shots,
            runs: group.iter().map(|r| r.label.clone()).collect(),
            result,
        });
    }
    if rows.is_empty() {
        bail!("ANOVA needs at least two runs of the same dataset, model and shot count");
    }
    let json_path = out.join("anova.json");
    write_json(&json_path, &rows)?;
    let csv_path = out.join("anova.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["dataset", "model", "shots", "runs", "f_statistic", "p_value", "df_between", "df_within"])?;
    for r in &rows {
        w.write_record([
            r.dataset.clone(),
            r.model.clone(),
            r.shots.to_string(),
            r.runs.len().to_string(),
            r.result.f_statistic.to_string(),
            r.result.p_value.to_string(),
            r.result.df_between.to_string(),
            r.result.df_within.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(vec![json_path, csv_path])
}

#[derive(Serialize)]
struct AgreementRow {
    run: String,
    dataset: String,
    model: String,
    shots: usize,
    seed: String,
    correlation: CorrelationResult,
}

#[derive(Serialize)]
struct AgreementMean {
    dataset: String,
    model: String,
    shots: usize,
    runs: usize,
    mean: CorrelationResult,
}

fn agreement(runs: &[LoadedRun], options: &AnalyzeOptions, out: &Path) -> Result<Vec<PathBuf>> {
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for run in runs {
        let source = RunSource::from_manifest(&run.manifest)?;
        let dataset = source.dataset.load()?;
        let pool = match run.manifest.scored_split.as_str() {
            "train" => &dataset.train,
            _ => &dataset.test,
        };
        if !pool.iter().any(|i| i.annotations.is_some()) {
            log::warn!("{}: scored split has no annotations, skipped in agreement", run.label);
            skipped.push(dataset.name.clone());
            continue;
        }
        let mut pvi = Vec::new();
        let mut agree = Vec::new();
        for s in usable(run, options) {
            let Some(anns) = pool
                .iter()
                .find(|i| i.id == s.instance_id)
                .and_then(|i| i.annotations.as_ref())
            else {
                continue;
            };
            pvi.push(s.pvi_bits);
            agree.push(variation_ratio_agreement(anns)?);
        }
        let correlation = pearson(&pvi, &agree).with_context(|| format!("agreement correlation for {}", run.label))?;
        rows.push(AgreementRow {
            run: run.label.clone(),
            dataset: run.dataset().into(),
            model: run.model().into(),
            shots: run.shots(),
            seed: run.seed_label(),
            correlation,
        });
    }
    if rows.is_empty() {
        skipped.dedup();
        bail!(
            "dataset `{}` has no annotations; agreement analysis needs per-annotator labels",
            skipped.join("`, `")
        );
    }
    let mut groups: BTreeMap<(&str, &str, usize), Vec<CorrelationResult>> = BTreeMap::new();
    for r in &rows {
        groups
            .entry((&r.dataset, &r.model, r.shots))
            .or_default()
            .push(r.correlation);
    }
    let means: Vec<AgreementMean> = groups
        .into_iter()
        .filter_map(|((d, m, s), cs)| {
            mean_correlation(&cs).map(|mean| AgreementMean {
                dataset: d.into(),
                model: m.into(),
                shots: s,
                runs: cs.len(),
                mean,
            })
        })
        .collect();

    let json_path = out.join("agreement.json");
    write_json(&json_path, &serde_json::json!({"runs": rows, "groups": means}))?;
    let csv_path = out.join("agreement.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["run", "dataset", "model", "shots", "seed", "n", "r", "p_value"])?;
    for r in &rows {
        w.write_record([
            r.run.clone(),
            r.dataset.clone(),
            r.model.clone(),
            r.shots.to_string(),
            r.seed.clone(),
            r.correlation.n.to_string(),
            r.correlation.r.to_string(),
            r.correlation.p_value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(vec![json_path, csv_path])
}
