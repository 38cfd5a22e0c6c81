//! A difficulty-graded mock world.
//!
//! Every test instance gets a difficulty in `[0, 1]`; the input-target prompt
//! puts `0.97 - 0.94 * difficulty` on the gold index and spreads the rest
//! over the other labels. The null-target prompt is the same for every query
//! (only exemplar answers), so its probabilities are a fixed label prior. The
//! resulting table-driven [`MockBackend`] lets a full scoring run execute
//! offline, and [`InstanceTruth`] keeps the generating probabilities so the
//! run can be checked against them.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::mock::{MockBackend, MockEntry};
use crate::backend::BackendError;
use crate::dataset::{Dataset, DatasetError, Instance, LabelSpace};
use crate::prompting::{build_prompt_pair, sample_exemplars, ExemplarSet, PromptError, PromptTemplate};

#[derive(Debug, Error)]
pub enum WorldError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("invalid world: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub n_test: usize,
    pub n_train: usize,
    pub labels: Vec<String>,
    pub shots: usize,
    pub seed: u64,
    /// Uniform jitter added to the graded difficulty, in `[0, 1]`.
    pub noise: f64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            n_test: 200,
            n_train: 40,
            labels: vec!["negative".into(), "positive".into()],
            shots: 4,
            seed: 0,
            noise: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceTruth {
    pub id: String,
    pub gold_index: usize,
    pub difficulty: f64,
    /// Next-token distribution over label indices under the input-target prompt.
    pub input_probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    pub dataset: Dataset,
    pub template: PromptTemplate,
    pub exemplars: ExemplarSet,
    /// Distribution over label indices under the (shared) null-target prompt.
    pub null_probs: Vec<f64>,
    pub truth: Vec<InstanceTruth>,
    pub entries: Vec<MockEntry>,
}

impl SyntheticWorld {
    pub fn generate(spec: &WorldSpec) -> Result<Self, WorldError> {
        let labels = LabelSpace::new(spec.labels.iter().cloned())?;
        let k = labels.len();
        if k < 2 {
            return Err(WorldError::Invalid("need at least two labels".into()));
        }
        if !(0.0..=1.0).contains(&spec.noise) {
            return Err(WorldError::Invalid(format!("noise {} outside [0, 1]", spec.noise)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

        let train: Vec<Instance> = (0..spec.n_train)
            .map(|i| {
                Instance::new(
                    format!("train-{i:04}"),
                    [("text", format!("training example {i}"))],
                    labels.label(i % k).unwrap(),
                )
            })
            .collect();

        let mut ranks: Vec<usize> = (0..spec.n_test).collect();
        ranks.shuffle(&mut rng);
        let denom = spec.n_test.saturating_sub(1).max(1) as f64;
        let mut test = Vec::with_capacity(spec.n_test);
        let mut truth = Vec::with_capacity(spec.n_test);
        for (i, rank) in ranks.into_iter().enumerate() {
            let id = format!("test-{i:04}");
            let gold_index = rng.gen_range(0..k);
            let jitter = spec.noise * (rng.gen::<f64>() - 0.5);
            let difficulty = (rank as f64 / denom + jitter).clamp(0.0, 1.0);
            let gold_prob = 0.97 - 0.94 * difficulty;
            let weights: Vec<f64> = (0..k - 1).map(|_| 0.2 + rng.gen::<f64>()).collect();
            let total: f64 = weights.iter().sum();
            let mut others = weights.iter().map(|w| (1.0 - gold_prob) * w / total);
            let input_probs: Vec<f64> = (0..k)
                .map(|j| if j == gold_index { gold_prob } else { others.next().unwrap() })
                .collect();
            test.push(Instance::new(
                id.clone(),
                [("text", format!("test example {i}"))],
                labels.label(gold_index).unwrap(),
            ));
            truth.push(InstanceTruth {
                id,
                gold_index,
                difficulty,
                input_probs,
            });
        }

        let prior: Vec<f64> = (0..k).map(|_| 0.5 + rng.gen::<f64>()).collect();
        let prior_total: f64 = prior.iter().sum();
        let null_probs: Vec<f64> = prior.iter().map(|w| w / prior_total).collect();

        let dataset = Dataset::new("synthetic", labels.clone(), train, test)?;
        let template = PromptTemplate::new("synthetic", [("text", "Text")], "Question: Which label fits, {labels}?")
            .resolve(&labels)?;
        let exemplars = sample_exemplars(&dataset, spec.shots, spec.seed, false)?;

        let mut entries = Vec::new();
        let tokens = labels.tokens();
        for (inst, t) in dataset.test.iter().zip(&truth) {
            let pair = build_prompt_pair(&template, &exemplars, inst, &labels)?;
            if entries.is_empty() {
                for (token, p) in tokens.iter().zip(&null_probs) {
                    entries.push(MockEntry {
                        prompt: pair.null_target.clone(),
                        token: token.clone(),
                        prob: *p,
                    });
                }
            }
            for (token, p) in tokens.iter().zip(&t.input_probs) {
                entries.push(MockEntry {
                    prompt: pair.input_target.clone(),
                    token: token.clone(),
                    prob: *p,
                });
            }
        }

        Ok(SyntheticWorld {
            dataset,
            template,
            exemplars,
            null_probs,
            truth,
            entries,
        })
    }

    pub fn backend(&self) -> Result<MockBackend, BackendError> {
        MockBackend::from_entries(
            self.entries
                .iter()
                .map(|e| (e.prompt.clone(), e.token.clone(), e.prob)),
        )
    }
}
