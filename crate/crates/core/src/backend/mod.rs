//! Single-token log-probability scoring.
//!
//! A [`Scorer`] answers one question: what is the natural-log probability of
//! `target_token` as the next token after `prompt`? Implementations:
//!
//! * [`mock::MockBackend`]: table-driven or seeded-hash, fully offline;
//! * [`remote::RemoteBackend`]: HTTP completions endpoint (feature `remote`);
//! * [`cache::CachedScorer`]: wraps any scorer with a content-addressed
//!   file store.

pub mod cache;
pub mod mock;
#[cfg(feature = "remote")]
pub mod remote;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("log-probability of target token {token:?} is not available")]
    MissingTargetLogprob { token: String },
    #[error("backend unavailable after {attempts} attempts: {message}")]
    BackendUnavailable { attempts: usize, message: String },
    #[error("target {token:?} is not a single token for this backend")]
    TargetNotSingleToken { token: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("cache error: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub model_id: String,
    pub prompt: String,
    pub target_token: String,
    /// Alternatives requested alongside the target.
    pub top_k: usize,
}

impl ScoreRequest {
    pub fn new(model_id: impl Into<String>, prompt: impl Into<String>, target_token: impl Into<String>) -> Self {
        ScoreRequest {
            model_id: model_id.into(),
            prompt: prompt.into(),
            target_token: target_token.into(),
            top_k: 5,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.target_token.is_empty() {
            return Err(BackendError::InvalidRequest("empty target token".into()));
        }
        if self.top_k == 0 {
            return Err(BackendError::InvalidRequest("top_k must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResult {
    /// ln P(target | prompt), always <= 0.
    pub logprob_nat: f64,
    /// Most likely next tokens, descending by log-probability.
    pub top_alternatives: Vec<(String, f64)>,
    #[serde(default)]
    pub from_cache: bool,
}

impl ScoreResult {
    pub fn new(logprob_nat: f64, mut top_alternatives: Vec<(String, f64)>) -> Self {
        sort_alternatives(&mut top_alternatives);
        ScoreResult {
            logprob_nat: logprob_nat.min(0.0),
            top_alternatives,
            from_cache: false,
        }
    }
}

pub(crate) fn sort_alternatives(alts: &mut [(String, f64)]) {
    alts.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
}

pub trait Scorer: Send + Sync {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResult, BackendError>;

    /// Scores several candidate continuations of one prompt. Backends that can
    /// answer all candidates from a single call override this.
    fn score_candidates(
        &self,
        model_id: &str,
        prompt: &str,
        candidates: &[String],
        top_k: usize,
    ) -> Vec<Result<ScoreResult, BackendError>> {
        candidates
            .iter()
            .map(|token| {
                self.score(&ScoreRequest {
                    model_id: model_id.to_string(),
                    prompt: prompt.to_string(),
                    target_token: token.clone(),
                    top_k,
                })
            })
            .collect()
    }
}

impl<T: Scorer + ?Sized> Scorer for Arc<T> {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResult, BackendError> {
        (**self).score(request)
    }

    fn score_candidates(
        &self,
        model_id: &str,
        prompt: &str,
        candidates: &[String],
        top_k: usize,
    ) -> Vec<Result<ScoreResult, BackendError>> {
        (**self).score_candidates(model_id, prompt, candidates, top_k)
    }
}

impl<T: Scorer + ?Sized> Scorer for Box<T> {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResult, BackendError> {
        (**self).score(request)
    }

    fn score_candidates(
        &self,
        model_id: &str,
        prompt: &str,
        candidates: &[String],
        top_k: usize,
    ) -> Vec<Result<ScoreResult, BackendError>> {
        (**self).score_candidates(model_id, prompt, candidates, top_k)
    }
}

/// What to do when a backend cannot report the target's log-probability.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum LogprobPolicy {
    #[default]
    Fail,
    /// Substitute `logprob_nat` and flag the instance.
    Floor { logprob_nat: f64 },
}

impl LogprobPolicy {
    /// ln(1e-10).
    pub const DEFAULT_FLOOR: f64 = -23.025850929940457;

    pub fn floor() -> Self {
        LogprobPolicy::Floor {
            logprob_nat: Self::DEFAULT_FLOOR,
        }
    }

    /// Resolves a missing-target error into a floored value when allowed.
    /// Returns `(logprob, floored)`.
    pub fn apply(&self, result: Result<ScoreResult, BackendError>) -> Result<(f64, bool), BackendError> {
        match (result, self) {
            (Ok(r), _) => Ok((r.logprob_nat, false)),
            (Err(BackendError::MissingTargetLogprob { .. }), LogprobPolicy::Floor { logprob_nat }) => {
                Ok((*logprob_nat, true))
            }
            (Err(e), _) => Err(e),
        }
    }
}


#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub token: String,
    pub index: usize,
    /// One entry per candidate, in candidate order.
    pub logprobs_nat: Vec<f64>,
    /// Candidates whose log-probability was floored.
    pub floored: Vec<bool>,
}

/// Argmax over candidate tokens at the answer position. Ties go to the
/// earliest candidate, i.e. the lowest label index.
pub fn predict_token(
    scorer: &dyn Scorer,
    model_id: &str,
    prompt: &str,
    candidates: &[String],
    top_k: usize,
    policy: LogprobPolicy,
) -> Result<Prediction, BackendError> {
    if candidates.is_empty() {
        return Err(BackendError::InvalidRequest("no candidate tokens".into()));
    }
    for (i, c) in candidates.iter().enumerate() {
        if candidates[..i].contains(c) {
            return Err(BackendError::InvalidRequest(format!(
                "duplicate candidate {c:?}"
            )));
        }
    }
    let results = scorer.score_candidates(model_id, prompt, candidates, top_k);
    let mut logprobs = Vec::with_capacity(candidates.len());
    let mut floored = Vec::with_capacity(candidates.len());
    for result in results {
        let (lp, fl) = policy.apply(result)?;
        logprobs.push(lp);
        floored.push(fl);
    }
    let mut best = 0;
    for (i, lp) in logprobs.iter().enumerate().skip(1) {
        if *lp > logprobs[best] {
            best = i;
        }
    }
    Ok(Prediction {
        token: candidates[best].clone(),
        index: best,
        logprobs_nat: logprobs,
        floored,
    })
}
