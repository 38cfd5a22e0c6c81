//! Offline scorers for tests and synthetic runs.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{sort_alternatives, BackendError, ScoreRequest, ScoreResult, Scorer};

/// One line of a mock fixture file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockEntry {
    pub prompt: String,
    pub token: String,
    pub prob: f64,
}

#[derive(Debug)]
enum Mode {
    /// prompt -> [(token, ln prob)]
    Table(HashMap<String, Vec<(String, f64)>>),
    Seeded { seed: u64, candidates: Vec<String> },
}

/// Deterministic stand-in for a language model. Every call to
/// [`Scorer::score`] increments a counter, so tests can assert how many
/// requests would have reached a real endpoint.
#[derive(Debug)]
pub struct MockBackend {
    mode: Mode,
    calls: AtomicUsize,
}

const SEEDED_MIN_LN: f64 = -13.815510557964274; // ln 1e-6
const SEEDED_MAX_LN: f64 = -0.01005033585350145; // ln 0.99

impl MockBackend {
    pub fn from_entries<I>(entries: I) -> Result<Self, BackendError>
    where
        I: IntoIterator<Item = (String, String, f64)>,
    {
        let mut table: HashMap<String, Vec<(String, f64)>> = HashMap::new();
        for (prompt, token, prob) in entries {
            if !(prob > 0.0 && prob <= 1.0) {
                return Err(BackendError::InvalidRequest(format!(
                    "mock probability {prob} for {token:?} outside (0, 1]"
                )));
            }
            let row = table.entry(prompt).or_default();
            match row.iter_mut().find(|(t, _)| *t == token) {
                Some(slot) => slot.1 = prob.ln(),
                None => row.push((token, prob.ln())),
            }
        }
        for row in table.values_mut() {
            sort_alternatives(row);
        }
        Ok(MockBackend {
            mode: Mode::Table(table),
            calls: AtomicUsize::new(0),
        })
    }

    /// Loads a JSONL fixture of `{prompt, token, prob}` records.
    pub fn from_jsonl(path: &Path) -> Result<Self, BackendError> {
        let file = File::open(path)
            .map_err(|e| BackendError::InvalidRequest(format!("{}: {e}", path.display())))?;
        let mut entries = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: MockEntry = serde_json::from_str(&line).map_err(|e| {
                BackendError::InvalidRequest(format!("{} line {}: {e}", path.display(), n + 1))
            })?;
            entries.push((entry.prompt, entry.token, entry.prob));
        }
        MockBackend::from_entries(entries)
    }

    /// Hash-derived probabilities: each `(seed, prompt, candidate)` maps
    /// uniformly into `[ln 1e-6, ln 0.99]`, and the result is renormalized
    /// over `candidates`.
    pub fn seeded(seed: u64, candidates: Vec<String>) -> Self {
        MockBackend {
            mode: Mode::Seeded { seed, candidates },
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn reset_calls(&self) {
        self.calls.store(0, Ordering::SeqCst);
    }

    fn seeded_raw(seed: u64, prompt: &str, token: &str) -> f64 {
        let mut hasher = Sha256::new();
        hasher.update(seed.to_le_bytes());
        hasher.update([0u8]);
        hasher.update(prompt.as_bytes());
        hasher.update([0u8]);
        hasher.update(token.as_bytes());
        let digest = hasher.finalize();
        let mut word = [0u8; 8];
        word.copy_from_slice(&digest[..8]);
        // 53 high bits -> [0, 1)
        let unit = (u64::from_le_bytes(word) >> 11) as f64 / (1u64 << 53) as f64;
        SEEDED_MIN_LN + unit * (SEEDED_MAX_LN - SEEDED_MIN_LN)
    }
}

impl Scorer for MockBackend {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResult, BackendError> {
        request.validate()?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        match &self.mode {
            Mode::Table(table) => {
                let row = table.get(&request.prompt);
                let logprob = row
                    .and_then(|r| r.iter().find(|(t, _)| *t == request.target_token))
                    .map(|(_, lp)| *lp)
                    .ok_or_else(|| BackendError::MissingTargetLogprob {
                        token: request.target_token.clone(),
                    })?;
                let alternatives = row
                    .map(|r| r.iter().take(request.top_k).cloned().collect())
                    .unwrap_or_default();
                Ok(ScoreResult::new(logprob, alternatives))
            }
            Mode::Seeded { seed, candidates } => {
                if !candidates.contains(&request.target_token) {
                    return Err(BackendError::MissingTargetLogprob {
                        token: request.target_token.clone(),
                    });
                }
                let raw: Vec<(String, f64)> = candidates
                    .iter()
                    .map(|c| (c.clone(), Self::seeded_raw(*seed, &request.prompt, c)))
                    .collect();
                let log_norm = raw.iter().map(|(_, r)| r.exp()).sum::<f64>().ln();
                let mut alternatives: Vec<(String, f64)> =
                    raw.into_iter().map(|(c, r)| (c, r - log_norm)).collect();
                let logprob = alternatives
                    .iter()
                    .find(|(c, _)| *c == request.target_token)
                    .map(|(_, lp)| *lp)
                    .unwrap_or(f64::NEG_INFINITY);
                sort_alternatives(&mut alternatives);
                alternatives.truncate(request.top_k);
                Ok(ScoreResult::new(logprob, alternatives))
            }
        }
    }
}
