//! Few-shot prompt construction.
//!
//! A run renders two prompts per query instance from one fixed exemplar set:
//!
//! * the input-target prompt lists every exemplar as its fields, the label
//!   question and `Answer: <index>`, then the query's fields and question
//!   followed by a bare `Answer:`;
//! * the null-target prompt keeps only the exemplar `Answer: <index>` lines
//!   and the final bare `Answer:`. Instance text is omitted entirely.
//!
//! The scored continuation is the gold label's index with a leading space
//! (`" 1"`), so the prompt itself never ends in whitespace.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, Instance, LabelSpace};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("requested {requested} exemplars but the training split has {available}")]
    InsufficientTrain { requested: usize, available: usize },
    #[error("label `{label}` needs {requested} training exemplars but has {available}")]
    InsufficientLabel {
        label: String,
        requested: usize,
        available: usize,
    },
    #[error("balanced sampling needs a multiple of {labels} shots, got {shots}")]
    UnbalancedShots { shots: usize, labels: usize },
    #[error("query `{0}` is also an exemplar")]
    Leakage(String),
    #[error("instance `{id}` has no field `{field}`")]
    MissingField { id: String, field: String },
    #[error("label `{0}` is not in the label space")]
    UnknownLabel(String),
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
    #[error("failed to read template {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Prompt layout for one task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    /// Field name to display label, in render order.
    pub field_labels: IndexMap<String, String>,
    /// The full question line. A `{labels}` placeholder expands to the
    /// enumerated label menu, see [`PromptTemplate::label_menu`].
    pub question_text: String,
    pub answer_prefix: String,
    pub separator: String,
}

impl PromptTemplate {
    pub fn new<I, K, V>(id: impl Into<String>, field_labels: I, question_text: impl Into<String>) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        PromptTemplate {
            id: id.into(),
            field_labels: field_labels
                .into_iter()
                .map(|(k, v)| (k.into(), v.into()))
                .collect(),
            question_text: question_text.into(),
            answer_prefix: "Answer:".to_string(),
            separator: "\n\n".to_string(),
        }
    }

    /// `(0) a, or (1) b` for two labels, `(0) a, (1) b, or (2) c` for three.
    pub fn label_menu(labels: &LabelSpace) -> String {
        let items: Vec<String> = labels
            .labels()
            .iter()
            .enumerate()
            .map(|(i, l)| format!("({i}) {l}"))
            .collect();
        match items.len() {
            1 => items[0].clone(),
            2 => format!("{}, or {}", items[0], items[1]),
            n => format!("{}, or {}", items[..n - 1].join(", "), items[n - 1]),
        }
    }

    /// Parses the key/value template format:
    ///
    /// ```text
    /// # comment
    /// id = cola
    /// field.sentence = Context
    /// question = Question: Is this {labels}?
    /// answer_prefix = Answer:
    /// separator = \n\n
    /// ```
    ///
    /// Values are trimmed; `\n`, `\t` and `\\` escapes are expanded.
    pub fn parse(text: &str) -> Result<Self, PromptError> {
        Self::parse_inner(text).map(|(t, _)| t)
    }

    fn parse_inner(text: &str) -> Result<(Self, bool), PromptError> {
        let mut id = None;
        let mut fields = IndexMap::new();
        let mut question = None;
        let mut answer_prefix = None;
        let mut separator = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                PromptError::InvalidTemplate(format!("line {}: expected `key = value`", n + 1))
            })?;
            let key = key.trim();
            let value = unescape(value.trim());
            match key {
                "id" => id = Some(value),
                "question" => question = Some(value),
                "answer_prefix" => answer_prefix = Some(value),
                "separator" => separator = Some(value),
                _ => match key.strip_prefix("field.") {
                    Some(name) if !name.is_empty() => {
                        fields.insert(name.to_string(), value);
                    }
                    _ => {
                        return Err(PromptError::InvalidTemplate(format!(
                            "line {}: unknown key `{key}`",
                            n + 1
                        )))
                    }
                },
            }
        }
        let question =
            question.ok_or_else(|| PromptError::InvalidTemplate("missing `question`".into()))?;
        if fields.is_empty() {
            return Err(PromptError::InvalidTemplate("no `field.*` entries".into()));
        }
        let has_id = id.is_some();
        let template = PromptTemplate {
            id: id.unwrap_or_else(|| "template".to_string()),
            field_labels: fields,
            question_text: question,
            answer_prefix: answer_prefix.unwrap_or_else(|| "Answer:".to_string()),
            separator: separator.unwrap_or_else(|| "\n\n".to_string()),
        };
        Ok((template, has_id))
    }

    /// Reads a template file. The id defaults to the file stem.
    pub fn from_file(path: &Path) -> Result<Self, PromptError> {
        let text = fs::read_to_string(path).map_err(|source| PromptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let (mut template, has_id) = PromptTemplate::parse_inner(&text)?;
        if !has_id {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                template.id = stem.to_string();
            }
        }
        Ok(template)
    }

    /// Expands `{labels}` and checks that every label is offered exactly once
    /// as `(<index>) <label>`.
    pub fn resolve(&self, labels: &LabelSpace) -> Result<PromptTemplate, PromptError> {
        let mut out = self.clone();
        out.question_text = self.question_text.replace("{labels}", &Self::label_menu(labels));
        out.validate(labels)?;
        Ok(out)
    }

    pub fn validate(&self, labels: &LabelSpace) -> Result<(), PromptError> {
        for (i, label) in labels.labels().iter().enumerate() {
            let entry = format!("({i}) {label}");
            let count = self.question_text.matches(&entry).count();
            if count != 1 {
                return Err(PromptError::InvalidTemplate(format!(
                    "question must list `{entry}` exactly once, found {count}"
                )));
            }
        }
        if self.question_text.contains("{labels}") {
            return Err(PromptError::InvalidTemplate(
                "unexpanded `{labels}` placeholder".into(),
            ));
        }
        Ok(())
    }

    fn render_inputs(&self, inst: &Instance, out: &mut String) -> Result<(), PromptError> {
        for (name, display) in &self.field_labels {
            let value = inst.fields.get(name).ok_or_else(|| PromptError::MissingField {
                id: inst.id.clone(),
                field: name.clone(),
            })?;
            out.push_str(display);
            out.push_str(": ");
            out.push_str(value);
            out.push('\n');
        }
        out.push_str(&self.question_text);
        out.push('\n');
        out.push_str(&self.answer_prefix);
        Ok(())
    }
}

fn unescape(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    let mut chars = value.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

/// A fixed, ordered sample of training instances used as demonstrations
/// for every query of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemplarSet {
    /// Sampling seed; `None` for sets chosen by other means (e.g. hardness).
    pub seed: Option<u64>,
    pub exemplars: Vec<Instance>,
}

impl ExemplarSet {
    pub fn new(seed: Option<u64>, exemplars: Vec<Instance>) -> Self {
        ExemplarSet { seed, exemplars }
    }

    pub fn shots(&self) -> usize {
        self.exemplars.len()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.exemplars.iter().map(|e| e.id.as_str()).collect()
    }

    pub fn contains_id(&self, id: &str) -> bool {
        self.exemplars.iter().any(|e| e.id == id)
    }
}

/// Rendered prompts for one query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPair {
    pub input_target: String,
    pub null_target: String,
    /// `" <index>"` of the query's gold label.
    pub target_token: String,
}

/// Draws `shots` training instances uniformly without replacement, or
/// `shots / |labels|` per label when `balanced`. The presentation order is
/// a seeded shuffle of the sample.
pub fn sample_exemplars(
    dataset: &Dataset,
    shots: usize,
    seed: u64,
    balanced: bool,
) -> Result<ExemplarSet, PromptError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = &dataset.train;
    let mut picked: Vec<&Instance> = if balanced {
        let n_labels = dataset.label_space.len();
        if shots % n_labels != 0 {
            return Err(PromptError::UnbalancedShots {
                shots,
                labels: n_labels,
            });
        }
        let per_label = shots / n_labels;
        let mut picked = Vec::with_capacity(shots);
        for label in dataset.label_space.labels() {
            let pool: Vec<&Instance> = train.iter().filter(|i| &i.gold_label == label).collect();
            if pool.len() < per_label {
                return Err(PromptError::InsufficientLabel {
                    label: label.clone(),
                    requested: per_label,
                    available: pool.len(),
                });
            }
            picked.extend(pool.choose_multiple(&mut rng, per_label).copied());
        }
        picked
    } else {
        if shots > train.len() {
            return Err(PromptError::InsufficientTrain {
                requested: shots,
                available: train.len(),
            });
        }
        train.choose_multiple(&mut rng, shots).collect()
    };
    picked.shuffle(&mut rng);
    Ok(ExemplarSet::new(
        Some(seed),
        picked.into_iter().cloned().collect(),
    ))
}

/// `[k, 2k]` with `k = max(|labels|, min_shots_floor)`; the floor defaults
/// to the number of labels.
pub fn default_shot_counts(labels: &LabelSpace, min_shots_floor: Option<usize>) -> Vec<usize> {
    let k = labels.len().max(min_shots_floor.unwrap_or(0));
    vec![k, 2 * k]
}

pub fn build_prompt_pair(
    template: &PromptTemplate,
    exemplars: &ExemplarSet,
    query: &Instance,
    labels: &LabelSpace,
) -> Result<PromptPair, PromptError> {
    template.validate(labels)?;
    if exemplars.contains_id(&query.id) {
        return Err(PromptError::Leakage(query.id.clone()));
    }
    let index_of = |inst: &Instance| {
        labels
            .index_of(&inst.gold_label)
            .ok_or_else(|| PromptError::UnknownLabel(inst.gold_label.clone()))
    };

    let mut input_target = String::new();
    let mut null_target = String::new();
    for ex in &exemplars.exemplars {
        let index = index_of(ex)?;
        template.render_inputs(ex, &mut input_target)?;
        input_target.push(' ');
        input_target.push_str(&index.to_string());
        input_target.push_str(&template.separator);

        null_target.push_str(&template.answer_prefix);
        null_target.push(' ');
        null_target.push_str(&index.to_string());
        null_target.push_str(&template.separator);
    }
    template.render_inputs(query, &mut input_target)?;
    null_target.push_str(&template.answer_prefix);

    Ok(PromptPair {
        input_target,
        null_target,
        target_token: LabelSpace::index_token(index_of(query)?),
    })
}
