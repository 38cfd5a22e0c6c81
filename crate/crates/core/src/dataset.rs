//! Labeled instances, label spaces and dataset loading.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{record}: {message}")]
    Parse { record: String, message: String },
    #[error("{record}: missing field `{field}`")]
    MissingField { record: String, field: String },
    #[error("label space is empty")]
    EmptyLabelSpace,
    #[error("label `{0}` declared more than once")]
    DuplicateLabel(String),
    #[error("instance `{id}`: gold label `{label}` is not in the label space")]
    UnknownLabel { id: String, label: String },
    #[error("instance `{id}`: annotation `{label}` is not in the label space")]
    UnknownAnnotation { id: String, label: String },
    #[error("instance `{id}`: annotation list is empty")]
    EmptyAnnotations { id: String },
    #[error("duplicate instance id `{0}`")]
    DuplicateId(String),
}

/// One labeled datum. `fields` keeps the configured field order, which is
/// also the order the fields are rendered in a prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub fields: IndexMap<String, String>,
    pub gold_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotations: Option<Vec<String>>,
}

impl Instance {
    pub fn new<I, K, V>(id: impl Into<String>, fields: I, gold_label: impl Into<String>) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        Instance {
            id: id.into(),
            fields: fields
                .into_iter()
                .map(|(k, v)| (k.into(), v.into()))
                .collect(),
            gold_label: gold_label.into(),
            annotations: None,
        }
    }

    pub fn with_annotations<I, S>(mut self, annotations: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.annotations = Some(annotations.into_iter().map(Into::into).collect());
        self
    }
}

/// Ordered, duplicate-free labels. A label's index is its position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSpace {
    labels: Vec<String>,
}

impl LabelSpace {
    pub fn new<I, S>(labels: I) -> Result<Self, DatasetError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(DatasetError::EmptyLabelSpace);
        }
        let mut seen = HashSet::new();
        for label in &labels {
            if !seen.insert(label.as_str()) {
                return Err(DatasetError::DuplicateLabel(label.clone()));
            }
        }
        Ok(LabelSpace { labels })
    }

    /// Lexicographically sorted set of the given labels.
    pub fn sorted<I, S>(labels: I) -> Result<Self, DatasetError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        labels.sort();
        labels.dedup();
        LabelSpace::new(labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index_of(label).is_some()
    }

    /// The scored continuation for a label index: a space followed by the
    /// decimal index, e.g. `" 1"`.
    pub fn index_token(index: usize) -> String {
        format!(" {index}")
    }

    /// Index tokens for every label, in label order.
    pub fn tokens(&self) -> Vec<String> {
        (0..self.labels.len()).map(Self::index_token).collect()
    }
}

impl TryFrom<Vec<String>> for LabelSpace {
    type Error = DatasetError;

    fn try_from(labels: Vec<String>) -> Result<Self, Self::Error> {
        LabelSpace::new(labels)
    }
}

impl From<LabelSpace> for Vec<String> {
    fn from(space: LabelSpace) -> Self {
        space.labels
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub label_space: LabelSpace,
    pub train: Vec<Instance>,
    pub test: Vec<Instance>,
}

impl Dataset {
    /// Validates ids and labels against `label_space`.
    pub fn new(
        name: impl Into<String>,
        label_space: LabelSpace,
        train: Vec<Instance>,
        test: Vec<Instance>,
    ) -> Result<Self, DatasetError> {
        let mut ids = HashSet::new();
        for inst in train.iter().chain(&test) {
            if !ids.insert(inst.id.as_str()) {
                return Err(DatasetError::DuplicateId(inst.id.clone()));
            }
            if !label_space.contains(&inst.gold_label) {
                return Err(DatasetError::UnknownLabel {
                    id: inst.id.clone(),
                    label: inst.gold_label.clone(),
                });
            }
            if let Some(annotations) = &inst.annotations {
                if annotations.is_empty() {
                    return Err(DatasetError::EmptyAnnotations { id: inst.id.clone() });
                }
                if let Some(bad) = annotations.iter().find(|a| !label_space.contains(a)) {
                    return Err(DatasetError::UnknownAnnotation {
                        id: inst.id.clone(),
                        label: bad.clone(),
                    });
                }
            }
        }
        Ok(Dataset {
            name: name.into(),
            label_space,
            train,
            test,
        })
    }

    /// Builds the label space from an explicit order, or from the sorted set
    /// of gold labels in both splits.
    pub fn from_splits(
        name: impl Into<String>,
        train: Vec<Instance>,
        test: Vec<Instance>,
        label_order: Option<&[String]>,
    ) -> Result<Self, DatasetError> {
        let label_space = match label_order {
            Some(order) => LabelSpace::new(order.iter().cloned())?,
            None => LabelSpace::sorted(
                train
                    .iter()
                    .chain(&test)
                    .map(|inst| inst.gold_label.clone()),
            )?,
        };
        Dataset::new(name, label_space, train, test)
    }

    /// Keeps the first `n` test instances in file order.
    pub fn head(&self, n: usize) -> Dataset {
        let mut out = self.clone();
        out.test.truncate(n);
        out
    }

    pub fn train_instance(&self, id: &str) -> Option<&Instance> {
        self.train.iter().find(|inst| inst.id == id)
    }

    pub fn test_instance(&self, id: &str) -> Option<&Instance> {
        self.test.iter().find(|inst| inst.id == id)
    }

    pub fn has_annotations(&self) -> bool {
        self.test.iter().any(|inst| inst.annotations.is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Jsonl,
    Csv,
}

impl DataFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "jsonl" | "json" => Some(DataFormat::Jsonl),
            "csv" => Some(DataFormat::Csv),
            _ => None,
        }
    }
}

impl FromStr for DataFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(DataFormat::Jsonl),
            "csv" => Ok(DataFormat::Csv),
            other => Err(format!("unknown data format `{other}`")),
        }
    }
}

impl fmt::Display for DataFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataFormat::Jsonl => "jsonl",
            DataFormat::Csv => "csv",
        })
    }
}

/// Column mapping for a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub field_names: Vec<String>,
    pub label_field: String,
    /// Record id column. When `None`, ids are the 1-based record line numbers.
    #[serde(default = "default_id_field")]
    pub id_field: Option<String>,
    #[serde(default)]
    pub annotation_field: Option<String>,
    #[serde(default = "default_annotation_delimiter")]
    pub annotation_delimiter: String,
    #[serde(default)]
    pub label_order: Option<Vec<String>>,
}

fn default_id_field() -> Option<String> {
    Some("id".to_string())
}

fn default_annotation_delimiter() -> String {
    "|".to_string()
}

impl LoadOptions {
    pub fn new<I, S>(field_names: I, label_field: impl Into<String>) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        LoadOptions {
            field_names: field_names.into_iter().map(Into::into).collect(),
            label_field: label_field.into(),
            id_field: default_id_field(),
            annotation_field: None,
            annotation_delimiter: default_annotation_delimiter(),
            label_order: None,
        }
    }
}

/// Loads a single file as the test split of a dataset named after the file
/// stem. The training split is empty.
pub fn load_dataset(
    path: &Path,
    format: DataFormat,
    opts: &LoadOptions,
) -> Result<Dataset, DatasetError> {
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string();
    let test = read_instances(path, format, opts)?;
    Dataset::from_splits(name, Vec::new(), test, opts.label_order.as_deref())
}

/// Loads a train and a test file into one dataset.
pub fn load_dataset_splits(
    name: &str,
    train: Option<&Path>,
    test: &Path,
    format: DataFormat,
    opts: &LoadOptions,
) -> Result<Dataset, DatasetError> {
    let train = match train {
        Some(path) => read_instances(path, format, opts)?,
        None => Vec::new(),
    };
    let test = read_instances(test, format, opts)?;
    Dataset::from_splits(name, train, test, opts.label_order.as_deref())
}

/// Reads instances in file order without label-space validation.
pub fn read_instances(
    path: &Path,
    format: DataFormat,
    opts: &LoadOptions,
) -> Result<Vec<Instance>, DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    match format {
        DataFormat::Jsonl => read_jsonl(BufReader::new(file), opts).map_err(|e| match e {
            ReadError::Io(source) => io_err(source),
            ReadError::Data(e) => e,
        }),
        DataFormat::Csv => read_csv(file, opts),
    }
}

enum ReadError {
    Io(std::io::Error),
    Data(DatasetError),
}

impl From<DatasetError> for ReadError {
    fn from(e: DatasetError) -> Self {
        ReadError::Data(e)
    }
}

fn read_jsonl<R: BufRead>(reader: R, opts: &LoadOptions) -> Result<Vec<Instance>, ReadError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(ReadError::Io)?;
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
            record: format!("line {line_no}"),
            message: e.to_string(),
        })?;
        let obj = value.as_object().ok_or_else(|| DatasetError::Parse {
            record: format!("line {line_no}"),
            message: "expected a JSON object".to_string(),
        })?;
        let get = |key: &str| obj.get(key).and_then(json_text);
        let annotations = match &opts.annotation_field {
            Some(field) => match obj.get(field) {
                Some(Value::Array(items)) => {
                    Some(items.iter().filter_map(json_text).collect::<Vec<_>>())
                }
                Some(Value::Null) | None => None,
                Some(other) => json_text(other)
                    .map(|cell| split_annotations(&cell, &opts.annotation_delimiter)),
            },
            None => None,
        };
        out.push(build_instance(line_no, &get, annotations, opts)?);
    }
    Ok(out)
}

fn read_csv(file: File, opts: &LoadOptions) -> Result<Vec<Instance>, DatasetError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| DatasetError::Parse {
            record: "header".to_string(),
            message: e.to_string(),
        })?
        .clone();
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // header is line 1
        let line_no = record
            .as_ref()
            .ok()
            .and_then(|r| r.position())
            .map(|p| p.line() as usize)
            .unwrap_or(i + 2);
        let record = record.map_err(|e| DatasetError::Parse {
            record: format!("line {line_no}"),
            message: e.to_string(),
        })?;
        let get = |key: &str| {
            headers
                .iter()
                .position(|h| h == key)
                .and_then(|idx| record.get(idx))
                .map(str::to_string)
        };
        let annotations = opts
            .annotation_field
            .as_deref()
            .and_then(get)
            .filter(|cell| !cell.trim().is_empty())
            .map(|cell| split_annotations(&cell, &opts.annotation_delimiter));
        out.push(build_instance(line_no, &get, annotations, opts)?);
    }
    Ok(out)
}

fn build_instance(
    line_no: usize,
    get: &dyn Fn(&str) -> Option<String>,
    annotations: Option<Vec<String>>,
    opts: &LoadOptions,
) -> Result<Instance, DatasetError> {
    let id = match &opts.id_field {
        Some(field) => get(field).ok_or_else(|| DatasetError::MissingField {
            record: format!("line {line_no}"),
            field: field.clone(),
        })?,
        None => line_no.to_string(),
    };
    let record = format!("line {line_no} (id `{id}`)");
    let missing = |field: &str| DatasetError::MissingField {
        record: record.clone(),
        field: field.to_string(),
    };
    let mut fields = IndexMap::new();
    for name in &opts.field_names {
        let value = get(name).ok_or_else(|| missing(name))?;
        fields.insert(name.clone(), value);
    }
    let gold_label = get(&opts.label_field).ok_or_else(|| missing(&opts.label_field))?;
    Ok(Instance {
        id,
        fields,
        gold_label,
        annotations,
    })
}

fn json_text(value: &Value) -> Option<String> {
    match value {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn split_annotations(cell: &str, delimiter: &str) -> Vec<String> {
    cell.split(delimiter)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}
