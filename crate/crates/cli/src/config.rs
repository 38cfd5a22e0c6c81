//! Experiment configuration: one JSON document per experimental grid.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use icpvi_core::backend::mock::MockBackend;
#[cfg(feature = "remote")]
use icpvi_core::backend::remote::{LogprobMode, RemoteBackend, RemoteConfig};
use icpvi_core::dataset::{load_dataset_splits, DataFormat, LoadOptions};
use icpvi_core::{Dataset, LogprobPolicy, PromptTemplate, Scorer};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    #[serde(default)]
    pub train: Option<PathBuf>,
    pub test: PathBuf,
    /// Inferred from the test file extension when absent.
    #[serde(default)]
    pub format: Option<DataFormat>,
    #[serde(flatten)]
    pub columns: LoadOptions,
}

impl DatasetSpec {
    pub fn load(&self) -> Result<Dataset> {
        let format = match self.format {
            Some(f) => f,
            None => DataFormat::from_path(&self.test)
                .with_context(|| format!("cannot infer format of {}", self.test.display()))?,
        };
        load_dataset_splits(&self.name, self.train.as_deref(), &self.test, format, &self.columns)
            .with_context(|| format!("loading dataset `{}`", self.name))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendSpec {
    /// Either a `{prompt, token, prob}` JSONL table or hash-seeded scores.
    Mock {
        #[serde(default)]
        table: Option<PathBuf>,
        #[serde(default)]
        seed: Option<u64>,
    },
    Remote {
        url: String,
        /// Name of the environment variable holding the API key.
        #[serde(default)]
        api_key_env: Option<String>,
        #[serde(default = "default_logprob_mode")]
        logprob_mode: String,
        #[serde(default)]
        max_attempts: Option<usize>,
    },
}

fn default_logprob_mode() -> String {
    "echo".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Test,
    Train,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Test => "test",
            Split::Train => "train",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub template: PathBuf,
    pub model_id: String,
    pub backend: BackendSpec,
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// Defaults to one and two exemplars per label.
    #[serde(default)]
    pub shots: Option<Vec<usize>>,
    #[serde(default)]
    pub min_shots_floor: Option<usize>,
    #[serde(default)]
    pub balanced: bool,
    /// A fixed exemplar set (as written by `select`) instead of sampling.
    #[serde(default)]
    pub exemplar_file: Option<PathBuf>,
    #[serde(default)]
    pub head: Option<usize>,
    #[serde(default = "default_split")]
    pub split: Split,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub missing_logprob: LogprobPolicy,
    /// Defaults to `<output_dir>/.cache`.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
}

fn default_split() -> Split {
    Split::Test
}

fn default_top_k() -> usize {
    5
}

fn default_in_flight() -> usize {
    4
}

impl ExperimentConfig {
    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut config: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let parent = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let base = fs::canonicalize(parent).with_context(|| format!("resolving {}", parent.display()))?;
        config.rebase(&base);
        Ok(config)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset.test);
        if let Some(p) = &mut self.dataset.train {
            fix(p);
        }
        fix(&mut self.template);
        if let Some(p) = &mut self.exemplar_file {
            fix(p);
        }
        if let Some(p) = &mut self.cache_dir {
            fix(p);
        }
        if let BackendSpec::Mock { table: Some(p), .. } = &mut self.backend {
            fix(p);
        }
        fix(&mut self.output_dir);
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir
            .clone()
            .unwrap_or_else(|| self.output_dir.join(".cache"))
    }

    pub fn validate(&self) -> Result<()> {
        let mut files = vec![("dataset.test", &self.dataset.test), ("template", &self.template)];
        if let Some(p) = &self.dataset.train {
            files.push(("dataset.train", p));
        }
        if let Some(p) = &self.exemplar_file {
            files.push(("exemplar_file", p));
        }
        if let BackendSpec::Mock { table: Some(p), .. } = &self.backend {
            files.push(("backend.table", p));
        }
        for (key, path) in files {
            if !path.is_file() {
                bail!("{key}: {} does not exist", path.display());
            }
        }
        if self.exemplar_file.is_none() {
            if self.seeds.is_empty() {
                bail!("`seeds` must list at least one seed");
            }
            if matches!(&self.shots, Some(s) if s.is_empty()) {
                bail!("`shots` must list at least one shot count");
            }
        }
        if self.top_k == 0 {
            bail!("`top_k` must be at least 1");
        }
        match &self.backend {
            BackendSpec::Mock { table, seed } => {
                if table.is_some() == seed.is_some() {
                    bail!("mock backend needs exactly one of `table` or `seed`");
                }
            }
            BackendSpec::Remote { logprob_mode, .. } => {
                if logprob_mode != "echo" && logprob_mode != "top_k" {
                    bail!("logprob_mode must be `echo` or `top_k`, got `{logprob_mode}`");
                }
            }
        }
        Ok(())
    }

    pub fn load_template(&self, dataset: &Dataset) -> Result<PromptTemplate> {
        PromptTemplate::from_file(&self.template)
            .and_then(|t| t.resolve(&dataset.label_space))
            .with_context(|| format!("template {}", self.template.display()))
    }

    /// The uncached backend named by the config.
    pub fn build_backend(&self, dataset: &Dataset) -> Result<Box<dyn Scorer>> {
        match &self.backend {
            BackendSpec::Mock { table: Some(path), .. } => Ok(Box::new(
                MockBackend::from_jsonl(path).with_context(|| format!("mock table {}", path.display()))?,
            )),
            BackendSpec::Mock { seed: Some(seed), .. } => {
                Ok(Box::new(MockBackend::seeded(*seed, dataset.label_space.tokens())))
            }
            BackendSpec::Mock { .. } => bail!("mock backend needs `table` or `seed`"),
            #[cfg(feature = "remote")]
            BackendSpec::Remote {
                url,
                api_key_env,
                logprob_mode,
                max_attempts,
            } => {
                let mode = if logprob_mode == "top_k" {
                    LogprobMode::TopK
                } else {
                    LogprobMode::Echo
                };
                let mut remote = RemoteConfig::new(url, mode);
                if let Some(var) = api_key_env {
                    remote.api_key = Some(
                        std::env::var(var).with_context(|| format!("environment variable {var} is not set"))?,
                    );
                }
                if let Some(n) = max_attempts {
                    remote.max_attempts = *n;
                }
                Ok(Box::new(RemoteBackend::new(remote)))
            }
            #[cfg(not(feature = "remote"))]
            BackendSpec::Remote { .. } => bail!("built without the `remote` feature"),
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub model_id: Option<String>,
    pub seeds: Option<Vec<u64>>,
    pub shots: Option<Vec<usize>>,
    pub head: Option<usize>,
    pub split: Option<Split>,
    pub exemplar_file: Option<PathBuf>,
    pub max_in_flight: Option<usize>,
    pub cache_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(self, config: &mut ExperimentConfig) {
        if let Some(v) = self.model_id {
            config.model_id = v;
        }
        if let Some(v) = self.seeds {
            config.seeds = v;
        }
        if let Some(v) = self.shots {
            config.shots = Some(v);
        }
        if let Some(v) = self.head {
            config.head = Some(v);
        }
        if let Some(v) = self.split {
            config.split = v;
        }
        if let Some(v) = self.exemplar_file {
            config.exemplar_file = Some(v);
        }
        if let Some(v) = self.max_in_flight {
            config.max_in_flight = v;
        }
        if let Some(v) = self.cache_dir {
            config.cache_dir = Some(v);
        }
        if let Some(v) = self.output_dir {
            config.output_dir = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> serde_json::Value {
        serde_json::json!({
            "dataset": {
                "name": "toy",
                "test": "test.jsonl",
                "field_names": ["text"],
                "label_field": "label"
            },
            "template": "toy.tmpl",
            "model_id": "mock",
            "backend": {"kind": "mock", "seed": 3},
            "seeds": [0],
            "output_dir": "out"
        })
    }

    #[test]
    fn defaults_and_rebase() {
        let mut c: ExperimentConfig = serde_json::from_value(minimal()).unwrap();
        assert_eq!(c.split, Split::Test);
        assert_eq!(c.top_k, 5);
        assert_eq!(c.missing_logprob, LogprobPolicy::Fail);
        assert_eq!(c.dataset.columns.id_field.as_deref(), Some("id"));
        c.rebase(Path::new("/base"));
        assert_eq!(c.dataset.test, Path::new("/base/test.jsonl"));
        assert_eq!(c.cache_dir(), Path::new("/base/out/.cache"));
    }

    #[test]
    fn floor_policy_parses() {
        let mut v = minimal();
        v["missing_logprob"] = serde_json::json!({"policy": "floor", "logprob_nat": -20.0});
        let c: ExperimentConfig = serde_json::from_value(v).unwrap();
        assert_eq!(c.missing_logprob, LogprobPolicy::Floor { logprob_nat: -20.0 });
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut v = minimal();
        v["sedes"] = serde_json::json!([1]);
        assert!(serde_json::from_value::<ExperimentConfig>(v).is_err());
    }

    #[test]
    fn validate_requires_seeds_and_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut c: ExperimentConfig = serde_json::from_value(minimal()).unwrap();
        c.rebase(dir.path());
        assert!(c.validate().unwrap_err().to_string().contains("does not exist"));
        fs::write(&c.dataset.test, "").unwrap();
        fs::write(&c.template, "").unwrap();
        c.validate().unwrap();
        c.seeds.clear();
        assert!(c.validate().is_err());
    }

    #[test]
    fn overrides_win() {
        let mut c: ExperimentConfig = serde_json::from_value(minimal()).unwrap();
        Overrides {
            seeds: Some(vec![4, 5]),
            head: Some(10),
            ..Overrides::default()
        }
        .apply(&mut c);
        assert_eq!(c.seeds, [4, 5]);
        assert_eq!(c.head, Some(10));
        assert_eq!(c.model_id, "mock");
    }
}
