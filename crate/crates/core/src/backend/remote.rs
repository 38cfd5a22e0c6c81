//! Completions-style HTTP backend.
//!
//! Requests are `POST`ed as `{model, prompt, max_tokens, logprobs, echo}` and
//! responses are read from `choices[0].logprobs`. Two access patterns:
//!
//! * [`LogprobMode::Echo`]: the prompt plus target is sent with `echo: true`
//!   and `max_tokens: 0`; the target's log-probability is read at the
//!   position after the prompt.
//! * [`LogprobMode::TopK`]: a one-token completion is requested with
//!   `logprobs: top_k`, and the target is looked up among the returned
//!   alternatives. A target outside the top-k is
//!   [`BackendError::MissingTargetLogprob`].

use std::thread;
use std::time::Duration;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::json;
use ureq::Agent;

use super::{BackendError, ScoreRequest, ScoreResult, Scorer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogprobMode {
    Echo,
    TopK,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub url: String,
    #[serde(skip)]
    pub api_key: Option<String>,
    pub mode: LogprobMode,
    pub max_attempts: usize,
    pub base_delay: Duration,
    pub max_delay: Duration,
    pub timeout: Duration,
}

impl RemoteConfig {
    pub fn new(url: impl Into<String>, mode: LogprobMode) -> Self {
        RemoteConfig {
            url: url.into(),
            api_key: None,
            mode,
            max_attempts: 5,
            base_delay: Duration::from_secs(1),
            max_delay: Duration::from_secs(60),
            timeout: Duration::from_secs(120),
        }
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    agent: Agent,
}

#[derive(Debug, Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    logprobs: Option<Logprobs>,
}

#[derive(Debug, Deserialize)]
struct Logprobs {
    #[serde(default)]
    tokens: Vec<String>,
    #[serde(default)]
    token_logprobs: Vec<Option<f64>>,
    #[serde(default)]
    top_logprobs: Option<Vec<Option<IndexMap<String, f64>>>>,
    #[serde(default)]
    text_offset: Option<Vec<usize>>,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent: Agent = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        RemoteBackend { config, agent }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn body(&self, request: &ScoreRequest) -> serde_json::Value {
        match self.config.mode {
            LogprobMode::Echo => json!({
                "model": request.model_id,
                "prompt": format!("{}{}", request.prompt, request.target_token),
                "max_tokens": 0,
                "logprobs": request.top_k,
                "echo": true,
            }),
            LogprobMode::TopK => json!({
                "model": request.model_id,
                "prompt": request.prompt,
                "max_tokens": 1,
                "logprobs": request.top_k,
                "echo": false,
            }),
        }
    }

    /// Posts with exponential backoff on transport errors, 429 and 5xx.
    /// `Retry-After` (seconds) overrides the computed delay.
    fn post(&self, body: &serde_json::Value) -> Result<CompletionResponse, BackendError> {
        let mut last_error = String::new();
        for attempt in 0..self.config.max_attempts {
            let mut req = self.agent.post(&self.config.url);
            if let Some(key) = &self.config.api_key {
                req = req.header("Authorization", format!("Bearer {key}"));
            }
            let (delay, message) = match req.send_json(body) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    if (200..300).contains(&status) {
                        return resp
                            .body_mut()
                            .read_json::<CompletionResponse>()
                            .map_err(|e| BackendError::Protocol(format!("bad response body: {e}")));
                    }
                    let retry_after = resp
                        .headers()
                        .get("retry-after")
                        .and_then(|v| v.to_str().ok())
                        .and_then(|v| v.trim().parse::<f64>().ok())
                        .filter(|s| s.is_finite() && *s >= 0.0)
                        .map(Duration::from_secs_f64);
                    let text = resp.body_mut().read_to_string().unwrap_or_default();
                    if status != 429 && !(500..600).contains(&status) {
                        return Err(BackendError::Protocol(format!("HTTP {status}: {text}")));
                    }
                    (retry_after, format!("HTTP {status}: {text}"))
                }
                Err(e) => (None, e.to_string()),
            };
            let backoff = self
                .config
                .base_delay
                .saturating_mul(1u32 << attempt.min(16))
                .min(self.config.max_delay);
            let wait = delay.map(|d| d.min(self.config.max_delay)).unwrap_or(backoff);
            log::warn!(
                "completion request attempt {}/{} failed: {message}",
                attempt + 1,
                self.config.max_attempts
            );
            last_error = message;
            if attempt + 1 < self.config.max_attempts {
                thread::sleep(wait);
            }
        }
        Err(BackendError::BackendUnavailable {
            attempts: self.config.max_attempts,
            message: last_error,
        })
    }

    fn logprobs(resp: CompletionResponse) -> Result<Logprobs, BackendError> {
        resp.choices
            .into_iter()
            .next()
            .and_then(|c| c.logprobs)
            .ok_or_else(|| BackendError::Protocol("response has no logprobs".into()))
    }

    fn alternatives(map: Option<&IndexMap<String, f64>>) -> Vec<(String, f64)> {
        map.map(|m| m.iter().map(|(t, lp)| (t.clone(), *lp)).collect())
            .unwrap_or_default()
    }

    fn read_echo(request: &ScoreRequest, lp: &Logprobs) -> Result<ScoreResult, BackendError> {
        let prompt_chars = request.prompt.chars().count();
        let offsets: Vec<usize> = match &lp.text_offset {
            Some(o) if o.len() == lp.tokens.len() => o.clone(),
            _ => lp
                .tokens
                .iter()
                .scan(0usize, |acc, t| {
                    let start = *acc;
                    *acc += t.chars().count();
                    Some(start)
                })
                .collect(),
        };
        let positions: Vec<usize> = (0..lp.tokens.len())
            .filter(|&i| offsets[i] >= prompt_chars)
            .collect();
        let not_single = || BackendError::TargetNotSingleToken {
            token: request.target_token.clone(),
        };
        let &[pos] = positions.as_slice() else {
            return Err(not_single());
        };
        if lp.tokens[pos] != request.target_token || offsets[pos] != prompt_chars {
            return Err(not_single());
        }
        let logprob = lp
            .token_logprobs
            .get(pos)
            .copied()
            .flatten()
            .ok_or_else(|| BackendError::Protocol("target position has no logprob".into()))?;
        let top = lp
            .top_logprobs
            .as_ref()
            .and_then(|t| t.get(pos))
            .and_then(Option::as_ref);
        Ok(ScoreResult::new(logprob, Self::alternatives(top)))
    }

    fn first_position_alternatives(lp: &Logprobs) -> Result<Vec<(String, f64)>, BackendError> {
        let top = lp
            .top_logprobs
            .as_ref()
            .and_then(|t| t.first())
            .and_then(Option::as_ref)
            .ok_or_else(|| BackendError::Protocol("response has no top_logprobs".into()))?;
        Ok(Self::alternatives(Some(top)))
    }

    fn pick(alternatives: &[(String, f64)], token: &str) -> Result<ScoreResult, BackendError> {
        alternatives
            .iter()
            .find(|(t, _)| t == token)
            .map(|(_, lp)| ScoreResult::new(*lp, alternatives.to_vec()))
            .ok_or_else(|| BackendError::MissingTargetLogprob {
                token: token.to_string(),
            })
    }
}

impl Scorer for RemoteBackend {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResult, BackendError> {
        request.validate()?;
        let lp = Self::logprobs(self.post(&self.body(request))?)?;
        match self.config.mode {
            LogprobMode::Echo => Self::read_echo(request, &lp),
            LogprobMode::TopK => Self::pick(&Self::first_position_alternatives(&lp)?, &request.target_token),
        }
    }

    /// In top-k mode one completion call answers every candidate.
    fn score_candidates(
        &self,
        model_id: &str,
        prompt: &str,
        candidates: &[String],
        top_k: usize,
    ) -> Vec<Result<ScoreResult, BackendError>> {
        let per_candidate = |token: &String| ScoreRequest {
            model_id: model_id.to_string(),
            prompt: prompt.to_string(),
            target_token: token.clone(),
            top_k,
        };
        match self.config.mode {
            LogprobMode::Echo => candidates.iter().map(|t| self.score(&per_candidate(t))).collect(),
            LogprobMode::TopK => {
                let Some(first) = candidates.first() else {
                    return Vec::new();
                };
                let fetched = self
                    .post(&self.body(&per_candidate(first)))
                    .and_then(Self::logprobs)
                    .and_then(|lp| Self::first_position_alternatives(&lp));
                match fetched {
                    Ok(alts) => candidates.iter().map(|t| Self::pick(&alts, t)).collect(),
                    Err(e) => {
                        let message = e.to_string();
                        let mut out = vec![Err(e)];
                        out.extend(candidates[1..].iter().map(|_| {
                            Err(BackendError::BackendUnavailable {
                                attempts: 0,
                                message: message.clone(),
                            })
                        }));
                        out
                    }
                }
            }
        }
    }
}
