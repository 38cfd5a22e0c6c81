//! In-context PVI.
//!
//! For a query `(x, y)` scored under the null-target prompt `p` and the
//! input-target prompt `p'`:
//!
//! ```text
//! PVI(x, y) = -log2 P[p](y) + log2 P[p'](y)
//! ```
//!
//! Backends report natural logs; everything in this module and downstream is
//! in bits.

use std::collections::HashSet;
use std::f64::consts::LN_2;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backend::{predict_token, BackendError, LogprobPolicy, ScoreRequest, Scorer};
use crate::dataset::{Dataset, Instance};
use crate::prompting::{build_prompt_pair, ExemplarSet, PromptError, PromptTemplate};

#[derive(Debug, Error)]
pub enum PviError {
    #[error("probability {0} is outside (0, 1]")]
    Domain(f64),
    #[error("instance `{instance_id}`: {source}")]
    Prompt {
        instance_id: String,
        #[source]
        source: PromptError,
    },
    #[error("instance `{instance_id}`: {source}")]
    Backend {
        instance_id: String,
        #[source]
        source: BackendError,
    },
    #[error("invalid run: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

pub fn nat_to_bits(nat: f64) -> f64 {
    nat / LN_2
}

/// `log2(p_input) - log2(p_null)`.
pub fn pvi_from_probs(p_null: f64, p_input: f64) -> Result<f64, PviError> {
    for p in [p_null, p_input] {
        if !(p > 0.0 && p <= 1.0) {
            return Err(PviError::Domain(p));
        }
    }
    Ok(p_input.log2() - p_null.log2())
}

/// Two-scorer PVI from log-probabilities already in bits: the gain of the
/// input-conditioned scorer over the null scorer.
pub fn pvi_from_bits(logp_null_bits: f64, logp_input_bits: f64) -> f64 {
    logp_input_bits - logp_null_bits
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredInstance {
    pub instance_id: String,
    pub gold_label: String,
    pub logp_null_bits: f64,
    pub logp_input_bits: f64,
    pub pvi_bits: f64,
    pub predicted_label: String,
    pub correct: bool,
    /// Some log-probability for this instance was floored.
    pub floored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: String,
    pub model_id: String,
    pub shots: usize,
    pub seed: Option<u64>,
    pub template_id: String,
    pub top_k: usize,
    pub policy: LogprobPolicy,
    pub max_in_flight: usize,
}

impl RunConfig {
    pub fn new(dataset: impl Into<String>, model_id: impl Into<String>, exemplars: &ExemplarSet, template: &PromptTemplate) -> Self {
        RunConfig {
            dataset: dataset.into(),
            model_id: model_id.into(),
            shots: exemplars.shots(),
            seed: exemplars.seed,
            template_id: template.id.clone(),
            top_k: 5,
            policy: LogprobPolicy::Fail,
            max_in_flight: 4,
        }
    }
}

/// Scores every test instance of `dataset`. Output order is test order,
/// independent of how requests interleave.
pub fn score_run(
    dataset: &Dataset,
    exemplars: &ExemplarSet,
    template: &PromptTemplate,
    scorer: &dyn Scorer,
    config: &RunConfig,
) -> Result<Vec<ScoredInstance>, PviError> {
    if exemplars.shots() != config.shots {
        return Err(PviError::Config(format!(
            "exemplar set has {} shots, run expects {}",
            exemplars.shots(),
            config.shots
        )));
    }
    let train_ids: HashSet<&str> = dataset.train.iter().map(|i| i.id.as_str()).collect();
    if let Some(stray) = exemplars.exemplars.iter().find(|e| !train_ids.contains(e.id.as_str())) {
        return Err(PviError::Config(format!(
            "exemplar `{}` is not in the training split",
            stray.id
        )));
    }
    template
        .validate(&dataset.label_space)
        .map_err(|e| PviError::Config(e.to_string()))?;

    let score_one = |inst: &Instance| score_instance(dataset, exemplars, template, scorer, config, inst);
    let test = &dataset.test;
    let workers = config.max_in_flight.max(1).min(test.len());
    if workers <= 1 {
        return test.iter().map(score_one).collect();
    }

    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<ScoredInstance, PviError>>>> =
        test.iter().map(|_| Mutex::new(None)).collect();
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= test.len() {
                    break;
                }
                let result = score_one(&test[i]);
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("every instance scored"))
        .collect()
}

fn score_instance(
    dataset: &Dataset,
    exemplars: &ExemplarSet,
    template: &PromptTemplate,
    scorer: &dyn Scorer,
    config: &RunConfig,
    query: &Instance,
) -> Result<ScoredInstance, PviError> {
    let labels = &dataset.label_space;
    let backend_err = |source| PviError::Backend {
        instance_id: query.id.clone(),
        source,
    };
    let pair = build_prompt_pair(template, exemplars, query, labels).map_err(|source| PviError::Prompt {
        instance_id: query.id.clone(),
        source,
    })?;

    let null = scorer.score(&ScoreRequest {
        model_id: config.model_id.clone(),
        prompt: pair.null_target.clone(),
        target_token: pair.target_token.clone(),
        top_k: config.top_k,
    });
    let (null_nat, null_floored) = config.policy.apply(null).map_err(backend_err)?;

    let prediction = predict_token(
        scorer,
        &config.model_id,
        &pair.input_target,
        &labels.tokens(),
        config.top_k,
        config.policy,
    )
    .map_err(backend_err)?;
    let gold = labels
        .index_of(&query.gold_label)
        .expect("gold label validated by build_prompt_pair");
    let input_nat = prediction.logprobs_nat[gold];

    let logp_null_bits = nat_to_bits(null_nat);
    let logp_input_bits = nat_to_bits(input_nat);
    let predicted_label = labels.label(prediction.index).unwrap_or_default().to_string();
    Ok(ScoredInstance {
        instance_id: query.id.clone(),
        gold_label: query.gold_label.clone(),
        logp_null_bits,
        logp_input_bits,
        pvi_bits: pvi_from_bits(logp_null_bits, logp_input_bits),
        correct: predicted_label == query.gold_label,
        predicted_label,
        floored: null_floored || prediction.floored.iter().any(|f| *f),
    })
}

pub fn accuracy(scored: &[ScoredInstance]) -> Option<f64> {
    if scored.is_empty() {
        return None;
    }
    Some(scored.iter().filter(|s| s.correct).count() as f64 / scored.len() as f64)
}

/// Everything needed to re-run a scoring cell against the cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub run: RunConfig,
    /// Split that was scored (`test`, or `train` for hardness ranking runs).
    pub scored_split: String,
    pub exemplar_ids: Vec<String>,
    pub n_instances: usize,
    pub n_correct: usize,
    pub n_floored: usize,
    pub scores_sha256: String,
    /// Opaque echo of the caller's dataset/backend configuration.
    #[serde(default)]
    pub source: serde_json::Value,
}

impl RunManifest {
    pub fn new(run: &RunConfig, scored_split: &str, exemplars: &ExemplarSet, scored: &[ScoredInstance]) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            run: run.clone(),
            scored_split: scored_split.to_string(),
            exemplar_ids: exemplars.exemplars.iter().map(|e| e.id.clone()).collect(),
            n_instances: scored.len(),
            n_correct: scored.iter().filter(|s| s.correct).count(),
            n_floored: scored.iter().filter(|s| s.floored).count(),
            scores_sha256: hex::encode(Sha256::digest(scores_jsonl_bytes(scored))),
            source: serde_json::Value::Null,
        }
    }
}

pub fn scores_jsonl_bytes(scored: &[ScoredInstance]) -> Vec<u8> {
    let mut out = Vec::new();
    for record in scored {
        serde_json::to_writer(&mut out, record).expect("ScoredInstance serializes");
        out.push(b'\n');
    }
    out
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> PviError {
    PviError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub fn write_scores_jsonl(path: &Path, scored: &[ScoredInstance]) -> Result<(), PviError> {
    std::fs::write(path, scores_jsonl_bytes(scored)).map_err(|e| io_err(path, e))
}

pub fn read_scores_jsonl(path: &Path) -> Result<Vec<ScoredInstance>, PviError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| io_err(path, format!("line {}: {e}", n + 1)))?);
    }
    Ok(out)
}

pub fn write_scores_csv(path: &Path, scored: &[ScoredInstance]) -> Result<(), PviError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    for record in scored {
        writer.serialize(record).map_err(|e| io_err(path, e))?;
    }
    writer.flush().map_err(|e| io_err(path, e))
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<(), PviError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut writer, manifest).map_err(|e| io_err(path, e))?;
    writer.write_all(b"\n").map_err(|e| io_err(path, e))?;
    writer.flush().map_err(|e| io_err(path, e))
}

pub fn read_manifest(path: &Path) -> Result<RunManifest, PviError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| io_err(path, e))
}
