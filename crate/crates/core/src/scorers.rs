//! Automatic answer scorers.
//!
//! A [`Scorer`] turns a (candidate, reference) answer pair into a normalized
//! score in [0, 1]. [`LexicalScorer`] is a token-level F1 computed in
//! process; [`FileScorer`] replays raw metric values computed elsewhere
//! (for example BARTScore log-likelihoods) and min-max normalizes them.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("no score for question {question_id}, candidate {candidate_model}, reference {reference_model}")]
    MissingScore {
        question_id: String,
        candidate_model: String,
        reference_model: String,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One pair to score. Text-based scorers read the answers, lookup-based
/// scorers read the identifiers.
#[derive(Debug, Clone, Copy)]
pub struct ScorePair<'a> {
    pub question_id: &'a str,
    pub candidate_model: &'a str,
    pub reference_model: &'a str,
    pub candidate: &'a str,
    pub reference: &'a str,
}

pub trait Scorer: Send + Sync {
    fn raw_score(&self, pair: &ScorePair<'_>) -> Result<f64, ScorerError>;

    fn normalize(&self, raw: f64) -> f64;

    fn score(&self, pair: &ScorePair<'_>) -> Result<f64, ScorerError> {
        Ok(self.normalize(self.raw_score(pair)?).clamp(0.0, 1.0))
    }
}

/// Lowercased alphanumeric tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn token_counts(tokens: &[String]) -> HashMap<&str, usize> {
    let mut counts = HashMap::new();
    for t in tokens {
        *counts.entry(t.as_str()).or_insert(0) += 1;
    }
    counts
}

/// Multiset token F1 between two texts.
///
/// Computed as `2·|overlap| / (|candidate| + |reference|)`, which equals the
/// harmonic mean of precision and recall and is symmetric in its arguments.
/// Returns 0 when either side has no tokens.
pub fn lexical_score(candidate: &str, reference: &str) -> f64 {
    let cand = tokenize(candidate);
    let refs = tokenize(reference);
    if cand.is_empty() || refs.is_empty() {
        log::warn!("lexical score on empty tokenization; scoring 0");
        return 0.0;
    }
    let cand_counts = token_counts(&cand);
    let ref_counts = token_counts(&refs);
    let overlap: usize = cand_counts
        .iter()
        .map(|(tok, &n)| n.min(ref_counts.get(tok).copied().unwrap_or(0)))
        .sum();
    (2 * overlap) as f64 / (cand.len() + refs.len()) as f64
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalScorer;

impl Scorer for LexicalScorer {
    fn raw_score(&self, pair: &ScorePair<'_>) -> Result<f64, ScorerError> {
        Ok(lexical_score(pair.candidate, pair.reference))
    }

    fn normalize(&self, raw: f64) -> f64 {
        raw
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ScoreRow {
    pub question_id: String,
    pub candidate_model: String,
    pub reference_model: String,
    pub raw_score: f64,
}

type ScoreKey = (String, String, String);

/// Precomputed raw scores keyed by (question, candidate model, reference model).
#[derive(Debug, Clone)]
pub struct FileScorer {
    rows: Vec<ScoreRow>,
    index: HashMap<ScoreKey, f64>,
    min: f64,
    max: f64,
}

impl FileScorer {
    /// Loads a CSV (`question_id,candidate_model,reference_model,raw_score`)
    /// or, for `.jsonl` files, one JSON object per line with the same keys.
    pub fn load(path: &Path) -> Result<Self, ScorerError> {
        let display = path.display().to_string();
        let rows = if path.extension().is_some_and(|e| e == "jsonl") {
            let reader = BufReader::new(File::open(path)?);
            let mut rows = Vec::new();
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let row: ScoreRow = serde_json::from_str(&line).map_err(|e| ScorerError::Parse {
                    path: display.clone(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
                rows.push(row);
            }
            rows
        } else {
            let mut reader = csv::Reader::from_path(path).map_err(|e| ScorerError::Parse {
                path: display.clone(),
                line: 1,
                message: e.to_string(),
            })?;
            let mut rows = Vec::new();
            for (i, rec) in reader.deserialize::<ScoreRow>().enumerate() {
                rows.push(rec.map_err(|e| ScorerError::Parse {
                    path: display.clone(),
                    // header is line 1
                    line: i + 2,
                    message: e.to_string(),
                })?);
            }
            rows
        };
        Self::from_rows(rows)
    }

    pub fn from_rows(rows: Vec<ScoreRow>) -> Result<Self, ScorerError> {
        if rows.is_empty() {
            return Err(ScorerError::InvalidInput("score file has no rows".into()));
        }
        let mut index = HashMap::with_capacity(rows.len());
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for row in &rows {
            if !row.raw_score.is_finite() {
                return Err(ScorerError::InvalidInput(format!(
                    "non-finite raw score for question {}",
                    row.question_id
                )));
            }
            min = min.min(row.raw_score);
            max = max.max(row.raw_score);
            let key = (
                row.question_id.clone(),
                row.candidate_model.clone(),
                row.reference_model.clone(),
            );
            if index.insert(key, row.raw_score).is_some() {
                return Err(ScorerError::InvalidInput(format!(
                    "duplicate score for question {}, candidate {}, reference {}",
                    row.question_id, row.candidate_model, row.reference_model
                )));
            }
        }
        Ok(Self {
            rows,
            index,
            min,
            max,
        })
    }

    pub fn rows(&self) -> &[ScoreRow] {
        &self.rows
    }

    pub fn range(&self) -> (f64, f64) {
        (self.min, self.max)
    }

    pub fn lookup(
        &self,
        question_id: &str,
        candidate_model: &str,
        reference_model: &str,
    ) -> Result<f64, ScorerError> {
        self.index
            .get(&(
                question_id.to_string(),
                candidate_model.to_string(),
                reference_model.to_string(),
            ))
            .copied()
            .ok_or_else(|| ScorerError::MissingScore {
                question_id: question_id.to_string(),
                candidate_model: candidate_model.to_string(),
                reference_model: reference_model.to_string(),
            })
    }
}

impl Scorer for FileScorer {
    fn raw_score(&self, pair: &ScorePair<'_>) -> Result<f64, ScorerError> {
        self.lookup(pair.question_id, pair.candidate_model, pair.reference_model)
    }

    fn normalize(&self, raw: f64) -> f64 {
        let span = self.max - self.min;
        if span == 0.0 {
            // a single distinct value carries no ranking information
            return 1.0;
        }
        ((raw - self.min) / span).clamp(0.0, 1.0)
    }
}
