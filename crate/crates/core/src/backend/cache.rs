//! Content-addressed score cache.
//!
//! Layout: one `<key>.json` file per request, where the key is the hex
//! SHA-256 of `model_id \0 prompt \0 target_token`. `top_k` is not part of
//! the key since the target's log-probability does not depend on it.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendError, ScoreRequest, ScoreResult, Scorer};

pub fn cache_key(model_id: &str, prompt: &str, target_token: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(model_id.as_bytes());
    hasher.update([0u8]);
    hasher.update(prompt.as_bytes());
    hasher.update([0u8]);
    hasher.update(target_token.as_bytes());
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub model_id: String,
    pub prompt: String,
    pub target_token: String,
    pub logprob_nat: f64,
    pub top_alternatives: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct CacheStats {
    pub entries: usize,
    pub bytes: u64,
}

#[derive(Debug)]
pub struct ScoreCache {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl ScoreCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| cache_err(&dir, e))?;
        Ok(ScoreCache {
            dir,
            write_lock: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, model_id: &str, prompt: &str, target_token: &str) -> Result<Option<CacheRecord>, BackendError> {
        let path = self.path_for(&cache_key(model_id, prompt, target_token));
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(cache_err(&path, e)),
        };
        let record: CacheRecord = serde_json::from_slice(&bytes)
            .map_err(|e| BackendError::Cache(format!("{}: {e}", path.display())))?;
        // a hash collision or a hand-edited file
        if record.model_id != model_id || record.prompt != prompt || record.target_token != target_token {
            return Err(BackendError::Cache(format!(
                "{}: record does not match its key",
                path.display()
            )));
        }
        Ok(Some(record))
    }

    pub fn put(&self, record: &CacheRecord) -> Result<(), BackendError> {
        let key = cache_key(&record.model_id, &record.prompt, &record.target_token);
        let path = self.path_for(&key);
        let bytes = serde_json::to_vec_pretty(record).map_err(|e| BackendError::Cache(e.to_string()))?;
        let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        let tmp = self.dir.join(format!(".{key}.tmp"));
        let mut file = fs::File::create(&tmp).map_err(|e| cache_err(&tmp, e))?;
        file.write_all(&bytes).map_err(|e| cache_err(&tmp, e))?;
        drop(file);
        fs::rename(&tmp, &path).map_err(|e| cache_err(&path, e))
    }

    pub fn stats(&self) -> Result<CacheStats, BackendError> {
        let mut stats = CacheStats::default();
        for path in self.entry_paths()? {
            stats.entries += 1;
            stats.bytes += fs::metadata(&path).map(|m| m.len()).unwrap_or(0);
        }
        Ok(stats)
    }

    /// Removes every cache record. Returns the number removed.
    pub fn clear(&self) -> Result<usize, BackendError> {
        let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        let paths = self.entry_paths()?;
        for path in &paths {
            fs::remove_file(path).map_err(|e| cache_err(path, e))?;
        }
        Ok(paths.len())
    }

    fn entry_paths(&self) -> Result<Vec<PathBuf>, BackendError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.dir).map_err(|e| cache_err(&self.dir, e))? {
            let path = entry.map_err(|e| cache_err(&self.dir, e))?.path();
            let is_record = path.extension().is_some_and(|e| e == "json")
                && path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .is_some_and(|s| s.len() == 64 && s.bytes().all(|b| b.is_ascii_hexdigit()));
            if is_record {
                out.push(path);
            }
        }
        out.sort();
        Ok(out)
    }
}

fn cache_err(path: &Path, e: std::io::Error) -> BackendError {
    BackendError::Cache(format!("{}: {e}", path.display()))
}

/// A scorer that answers from the cache when it can and records every
/// successful inner response. Errors are never cached.
pub struct CachedScorer<S> {
    inner: S,
    cache: ScoreCache,
}

impl<S: Scorer> CachedScorer<S> {
    pub fn new(inner: S, cache: ScoreCache) -> Self {
        CachedScorer { inner, cache }
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }

    pub fn cache(&self) -> &ScoreCache {
        &self.cache
    }

    fn hit(record: CacheRecord) -> ScoreResult {
        ScoreResult {
            logprob_nat: record.logprob_nat,
            top_alternatives: record.top_alternatives,
            from_cache: true,
        }
    }

    fn store(&self, model_id: &str, prompt: &str, token: &str, result: &ScoreResult) -> Result<(), BackendError> {
        self.cache.put(&CacheRecord {
            model_id: model_id.to_string(),
            prompt: prompt.to_string(),
            target_token: token.to_string(),
            logprob_nat: result.logprob_nat,
            top_alternatives: result.top_alternatives.clone(),
        })
    }
}

impl<S: Scorer> Scorer for CachedScorer<S> {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResult, BackendError> {
        request.validate()?;
        if let Some(record) = self
            .cache
            .get(&request.model_id, &request.prompt, &request.target_token)?
        {
            return Ok(Self::hit(record));
        }
        let result = self.inner.score(request)?;
        self.store(&request.model_id, &request.prompt, &request.target_token, &result)?;
        Ok(ScoreResult {
            from_cache: false,
            ..result
        })
    }

    fn score_candidates(
        &self,
        model_id: &str,
        prompt: &str,
        candidates: &[String],
        top_k: usize,
    ) -> Vec<Result<ScoreResult, BackendError>> {
        let mut out: Vec<Option<Result<ScoreResult, BackendError>>> = Vec::with_capacity(candidates.len());
        let mut missing = Vec::new();
        for token in candidates {
            match self.cache.get(model_id, prompt, token) {
                Ok(Some(record)) => out.push(Some(Ok(Self::hit(record)))),
                Ok(None) => {
                    missing.push(token.clone());
                    out.push(None);
                }
                Err(e) => out.push(Some(Err(e))),
            }
        }
        if !missing.is_empty() {
            let fresh = self.inner.score_candidates(model_id, prompt, &missing, top_k);
            let mut fresh = missing.iter().zip(fresh);
            for slot in out.iter_mut().filter(|s| s.is_none()) {
                let (token, result) = fresh.next().expect("one result per candidate");
                let result = result.and_then(|r| {
                    self.store(model_id, prompt, token, &r)?;
                    Ok(ScoreResult { from_cache: false, ..r })
                });
                *slot = Some(result);
            }
        }
        out.into_iter().map(|r| r.expect("filled")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::super::mock::MockBackend;
    use super::*;
    use std::sync::Arc;

    fn mock() -> Arc<MockBackend> {
        Arc::new(
            MockBackend::from_entries([
                ("Answer:".to_string(), " 1".to_string(), 0.5),
                ("Answer:".to_string(), " 0".to_string(), 0.25),
            ])
            .unwrap(),
        )
    }

    #[test]
    fn key_layout() {
        let key = cache_key("m", "p", " 1");
        assert_eq!(key.len(), 64);
        let mut h = Sha256::new();
        h.update(b"m\0p\0 1");
        assert_eq!(key, hex::encode(h.finalize()));
    }

    #[test]
    fn second_call_is_cached() {
        let dir = tempfile::tempdir().unwrap();
        let inner = mock();
        let scorer = CachedScorer::new(inner.clone(), ScoreCache::open(dir.path()).unwrap());
        let req = ScoreRequest::new("m", "Answer:", " 1");
        let first = scorer.score(&req).unwrap();
        let second = scorer.score(&req).unwrap();
        assert!(!first.from_cache);
        assert!(second.from_cache);
        assert_eq!(first.logprob_nat, second.logprob_nat);
        assert_eq!(first.top_alternatives, second.top_alternatives);
        assert_eq!(inner.calls(), 1);
        assert_eq!(scorer.cache().stats().unwrap().entries, 1);
    }

    #[test]
    fn top_k_not_in_key() {
        let dir = tempfile::tempdir().unwrap();
        let inner = mock();
        let scorer = CachedScorer::new(inner.clone(), ScoreCache::open(dir.path()).unwrap());
        let mut req = ScoreRequest::new("m", "Answer:", " 1");
        scorer.score(&req).unwrap();
        req.top_k = 1;
        assert!(scorer.score(&req).unwrap().from_cache);
        assert_eq!(inner.calls(), 1);
    }

    #[test]
    fn errors_not_cached() {
        let dir = tempfile::tempdir().unwrap();
        let inner = mock();
        let scorer = CachedScorer::new(inner.clone(), ScoreCache::open(dir.path()).unwrap());
        let req = ScoreRequest::new("m", "Answer:", " 7");
        assert!(scorer.score(&req).is_err());
        assert!(scorer.score(&req).is_err());
        assert_eq!(inner.calls(), 2);
        assert_eq!(scorer.cache().stats().unwrap().entries, 0);
    }

    #[test]
    fn candidates_partially_cached() {
        let dir = tempfile::tempdir().unwrap();
        let inner = mock();
        let scorer = CachedScorer::new(inner.clone(), ScoreCache::open(dir.path()).unwrap());
        scorer.score(&ScoreRequest::new("m", "Answer:", " 1")).unwrap();
        let cands = vec![" 0".to_string(), " 1".to_string()];
        let results = scorer.score_candidates("m", "Answer:", &cands, 5);
        assert!(!results[0].as_ref().unwrap().from_cache);
        assert!(results[1].as_ref().unwrap().from_cache);
        assert_eq!(inner.calls(), 2);
        let again = scorer.score_candidates("m", "Answer:", &cands, 5);
        assert!(again.iter().all(|r| r.as_ref().unwrap().from_cache));
        assert_eq!(inner.calls(), 2);
    }

    #[test]
    fn clear_removes_records() {
        let dir = tempfile::tempdir().unwrap();
        let scorer = CachedScorer::new(mock(), ScoreCache::open(dir.path()).unwrap());
        scorer.score(&ScoreRequest::new("m", "Answer:", " 1")).unwrap();
        scorer.score(&ScoreRequest::new("m", "Answer:", " 0")).unwrap();
        assert_eq!(scorer.cache().clear().unwrap(), 2);
        assert_eq!(scorer.cache().stats().unwrap().entries, 0);
    }

    #[test]
    fn logprob_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ScoreCache::open(dir.path()).unwrap();
        let lp = 0.123456789012345f64.ln();
        let record = CacheRecord {
            model_id: "m".into(),
            prompt: "p".into(),
            target_token: " 1".into(),
            logprob_nat: lp,
            top_alternatives: vec![(" 1".into(), lp)],
        };
        cache.put(&record).unwrap();
        let back = cache.get("m", "p", " 1").unwrap().unwrap();
        assert_eq!(back.logprob_nat.to_bits(), lp.to_bits());
    }
}
