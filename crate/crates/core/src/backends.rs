//! Replayable model backends fed from a question/answer dataset.
//!
//! Each backend answers dataset questions verbatim and is unreachable during
//! its scripted offline windows, which are closed-open `[from, to)` in
//! logical minutes.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: missing required column {column:?}")]
    Schema { path: String, column: String },
    #[error("duplicate question_id {0:?}")]
    DuplicateKey(String),
    #[error("model {0:?} is unreachable")]
    Unreachable(String),
    #[error("model {model:?} has no answer for {question:?}")]
    NoAnswer { model: String, question: String },
    #[error("unknown backend {0:?}")]
    NotFound(String),
    #[error("invalid backend script: {0}")]
    InvalidScript(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionTrace {
    pub question_id: String,
    pub context: String,
    pub question: String,
    #[serde(default)]
    pub ground_truth: Option<String>,
    pub answers: BTreeMap<String, String>,
}

impl InteractionTrace {
    fn check(&self) -> Result<(), String> {
        if self.question_id.is_empty() {
            return Err("empty question_id".into());
        }
        if self.context.trim().is_empty() {
            return Err(format!("question {} has an empty context", self.question_id));
        }
        if self.answers.is_empty() {
            return Err(format!("question {} has no model answers", self.question_id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Jsonl,
    Csv,
}

impl DatasetFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => DatasetFormat::Csv,
            _ => DatasetFormat::Jsonl,
        }
    }
}

const CSV_FIXED_COLUMNS: [&str; 4] = ["question_id", "context", "question", "ground_truth"];

/// Loads traces from JSON-lines (one trace object per line) or from CSV with
/// `question_id,context,question[,ground_truth]` plus one column per model.
pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Vec<InteractionTrace>, BackendError> {
    let display = path.display().to_string();
    let traces = match format {
        DatasetFormat::Jsonl => load_jsonl(path, &display)?,
        DatasetFormat::Csv => load_csv(path, &display)?,
    };
    let mut seen = HashMap::new();
    for (line, t) in &traces {
        t.check().map_err(|message| BackendError::Malformed {
            path: display.clone(),
            line: *line,
            message,
        })?;
        if seen.insert(t.question_id.clone(), *line).is_some() {
            return Err(BackendError::DuplicateKey(t.question_id.clone()));
        }
    }
    Ok(traces.into_iter().map(|(_, t)| t).collect())
}

fn load_jsonl(path: &Path, display: &str) -> Result<Vec<(usize, InteractionTrace)>, BackendError> {
    let text = fs::read_to_string(path).map_err(|source| BackendError::Io {
        path: display.to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| BackendError::Malformed {
                path: display.to_string(),
                line: i + 1,
                message: e.to_string(),
            })?;
        for column in ["question_id", "context", "question", "answers"] {
            if value.get(column).is_none() {
                return Err(BackendError::Schema {
                    path: format!("{display}:{}", i + 1),
                    column: column.to_string(),
                });
            }
        }
        let trace: InteractionTrace =
            serde_json::from_value(value).map_err(|e| BackendError::Malformed {
                path: display.to_string(),
                line: i + 1,
                message: e.to_string(),
            })?;
        out.push((i + 1, trace));
    }
    Ok(out)
}

fn load_csv(path: &Path, display: &str) -> Result<Vec<(usize, InteractionTrace)>, BackendError> {
    let malformed = |line: usize, message: String| BackendError::Malformed {
        path: display.to_string(),
        line,
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| malformed(1, e.to_string()))?;
    let headers = reader.headers().map_err(|e| malformed(1, e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut fixed = [None; 4];
    for (slot, name) in fixed.iter_mut().zip(CSV_FIXED_COLUMNS) {
        *slot = col(name);
    }
    for (idx, name) in fixed.iter().zip(CSV_FIXED_COLUMNS).take(3) {
        if idx.is_none() {
            return Err(BackendError::Schema {
                path: display.to_string(),
                column: name.to_string(),
            });
        }
    }
    let model_columns: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !CSV_FIXED_COLUMNS.contains(h))
        .map(|(i, h)| (i, h.to_string()))
        .collect();
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| malformed(line, e.to_string()))?;
        let field = |idx: Option<usize>| idx.and_then(|i| rec.get(i)).unwrap_or("").to_string();
        let answers = model_columns
            .iter()
            .filter_map(|(i, m)| {
                rec.get(*i)
                    .filter(|a| !a.is_empty())
                    .map(|a| (m.clone(), a.to_string()))
            })
            .collect();
        let ground_truth = field(fixed[3]);
        out.push((
            line,
            InteractionTrace {
                question_id: field(fixed[0]),
                context: field(fixed[1]),
                question: field(fixed[2]),
                ground_truth: (!ground_truth.is_empty()).then_some(ground_truth),
                answers,
            },
        ));
    }
    Ok(out)
}

pub fn write_jsonl(path: &Path, traces: &[InteractionTrace]) -> std::io::Result<()> {
    let mut out = String::new();
    for t in traces {
        out.push_str(&serde_json::to_string(t).expect("trace serializes"));
        out.push('\n');
    }
    fs::write(path, out)
}

/// Closed-open offline window `[from, to)` in logical minutes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OfflineWindow {
    pub from: u64,
    pub to: u64,
}

impl OfflineWindow {
    pub fn contains(&self, t: u64) -> bool {
        self.from <= t && t < self.to
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendScript {
    pub model_name: String,
    #[serde(default)]
    pub latency_ms: u64,
    #[serde(default)]
    pub offline: Vec<OfflineWindow>,
    /// Answer for free-form prompts that match no dataset question.
    #[serde(default)]
    pub fallback: Option<String>,
}

impl BackendScript {
    pub fn always_online(model_name: &str) -> Self {
        Self {
            model_name: model_name.to_string(),
            latency_ms: 0,
            offline: Vec::new(),
            fallback: None,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let mut prev_end = None;
        for w in &self.offline {
            if w.from >= w.to {
                return Err(BackendError::InvalidScript(format!(
                    "{}: empty offline window [{}, {})",
                    self.model_name, w.from, w.to
                )));
            }
            if prev_end.is_some_and(|end| w.from < end) {
                return Err(BackendError::InvalidScript(format!(
                    "{}: offline windows overlap or are out of order at [{}, {})",
                    self.model_name, w.from, w.to
                )));
            }
            prev_end = Some(w.to);
        }
        Ok(())
    }

    pub fn is_online(&self, t: u64) -> bool {
        !self.offline.iter().any(|w| w.contains(t))
    }
}

/// The set of replay backends sharing one dataset. Read-only after
/// construction.
#[derive(Debug, Clone)]
pub struct BackendSet {
    traces: Arc<Vec<InteractionTrace>>,
    by_id: HashMap<String, usize>,
    by_text: HashMap<String, usize>,
    scripts: BTreeMap<String, BackendScript>,
}

impl BackendSet {
    pub fn new(traces: Vec<InteractionTrace>, scripts: Vec<BackendScript>) -> Result<Self, BackendError> {
        let mut by_id = HashMap::new();
        let mut by_text = HashMap::new();
        for (i, t) in traces.iter().enumerate() {
            if by_id.insert(t.question_id.clone(), i).is_some() {
                return Err(BackendError::DuplicateKey(t.question_id.clone()));
            }
            by_text.entry(t.question.clone()).or_insert(i);
        }
        let mut map = BTreeMap::new();
        for s in scripts {
            s.validate()?;
            if map.contains_key(&s.model_name) {
                return Err(BackendError::InvalidScript(format!(
                    "backend {} declared twice",
                    s.model_name
                )));
            }
            map.insert(s.model_name.clone(), s);
        }
        Ok(Self {
            traces: Arc::new(traces),
            by_id,
            by_text,
            scripts: map,
        })
    }

    pub fn traces(&self) -> &[InteractionTrace] {
        &self.traces
    }

    pub fn trace(&self, question_id: &str) -> Option<&InteractionTrace> {
        self.by_id.get(question_id).map(|&i| &self.traces[i])
    }

    pub fn trace_by_text(&self, question: &str) -> Option<&InteractionTrace> {
        self.by_text.get(question).map(|&i| &self.traces[i])
    }

    pub fn model_names(&self) -> impl Iterator<Item = &str> {
        self.scripts.keys().map(String::as_str)
    }

    pub fn script(&self, model: &str) -> Option<&BackendScript> {
        self.scripts.get(model)
    }

    pub fn probe(&self, model: &str, at_time: u64) -> Result<bool, BackendError> {
        self.scripts
            .get(model)
            .map(|s| s.is_online(at_time))
            .ok_or_else(|| BackendError::NotFound(model.to_string()))
    }

    pub fn query(&self, model: &str, question_id: &str, at_time: u64) -> Result<String, BackendError> {
        if !self.probe(model, at_time)? {
            return Err(BackendError::Unreachable(model.to_string()));
        }
        self.trace(question_id)
            .and_then(|t| t.answers.get(model))
            .cloned()
            .ok_or_else(|| BackendError::NoAnswer {
                model: model.to_string(),
                question: question_id.to_string(),
            })
    }

    /// Answers a free-form prompt: a dataset question with the same text is
    /// answered from the dataset, anything else from the scripted fallback.
    pub fn query_text(&self, model: &str, prompt: &str, at_time: u64) -> Result<String, BackendError> {
        if !self.probe(model, at_time)? {
            return Err(BackendError::Unreachable(model.to_string()));
        }
        if let Some(answer) = self.trace_by_text(prompt).and_then(|t| t.answers.get(model)) {
            return Ok(answer.clone());
        }
        self.scripts[model]
            .fallback
            .clone()
            .ok_or_else(|| BackendError::NoAnswer {
                model: model.to_string(),
                question: prompt.to_string(),
            })
    }
}
