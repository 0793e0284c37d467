//! Pairwise-comparison analytics over automatic scores: winners, accuracy
//! against human labels, model rankings and their Kendall correlation, and
//! per-context win rates.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::InteractionTrace;
use crate::scorers::{lexical_score, FileScorer, Scorer};

pub const DEFAULT_TIE_EPSILON: f64 = 0.01;
pub const TIE_LABEL: &str = "tie";

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Winner {
    A,
    B,
    Tie,
}

impl fmt::Display for Winner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Winner::A => "A",
            Winner::B => "B",
            Winner::Tie => "Tie",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseJudgment {
    pub question_id: String,
    pub model_a: String,
    pub model_b: String,
    pub winner: Winner,
    #[serde(default)]
    pub context: Option<String>,
}

impl PairwiseJudgment {
    /// Winning model name, or `"tie"`.
    pub fn label(&self) -> &str {
        match self.winner {
            Winner::A => &self.model_a,
            Winner::B => &self.model_b,
            Winner::Tie => TIE_LABEL,
        }
    }

    fn key(&self) -> (&str, &str, &str) {
        (&self.question_id, &self.model_a, &self.model_b)
    }
}

pub fn pairwise_winner(score_a: f64, score_b: f64, tie_epsilon: f64) -> Winner {
    if score_a - score_b > tie_epsilon {
        Winner::A
    } else if score_b - score_a > tie_epsilon {
        Winner::B
    } else {
        Winner::Tie
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    pub accuracy: f64,
    pub total: usize,
    pub matches: usize,
    /// (true label, predicted label) → count; labels are winner model names or `"tie"`.
    pub confusion: BTreeMap<(String, String), usize>,
}

/// Fraction of aligned judgments whose winners agree.
pub fn accuracy(
    predicted: &[PairwiseJudgment],
    truth: &[PairwiseJudgment],
) -> Result<AccuracyReport, AnalyticsError> {
    if predicted.len() != truth.len() {
        return Err(AnalyticsError::InvalidInput(format!(
            "{} predictions for {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(AnalyticsError::InvalidInput("no judgments to compare".into()));
    }
    let mut confusion = BTreeMap::new();
    let mut matches = 0;
    for (p, t) in predicted.iter().zip(truth) {
        if p.key() != t.key() {
            return Err(AnalyticsError::InvalidInput(format!(
                "misaligned judgments: {:?} vs {:?}",
                p.key(),
                t.key()
            )));
        }
        if p.winner == t.winner {
            matches += 1;
        }
        *confusion
            .entry((t.label().to_string(), p.label().to_string()))
            .or_insert(0) += 1;
    }
    Ok(AccuracyReport {
        accuracy: matches as f64 / truth.len() as f64,
        total: truth.len(),
        matches,
        confusion,
    })
}

/// Kendall's tau between two strict rankings of the same items:
/// `(concordant - discordant) / (n(n-1)/2)`.
pub fn kendall_tau<S: AsRef<str>>(ranking_a: &[S], ranking_b: &[S]) -> Result<f64, AnalyticsError> {
    let pos_b: HashMap<&str, usize> = ranking_b
        .iter()
        .enumerate()
        .map(|(i, m)| (m.as_ref(), i))
        .collect();
    if pos_b.len() != ranking_b.len() {
        return Err(AnalyticsError::InvalidInput("duplicate item in second ranking".into()));
    }
    let n = ranking_a.len();
    if n != ranking_b.len() {
        return Err(AnalyticsError::InvalidInput(format!(
            "rankings have {} and {} items",
            n,
            ranking_b.len()
        )));
    }
    if n < 2 {
        return Err(AnalyticsError::InvalidInput(
            "Kendall's tau needs at least two items".into(),
        ));
    }
    let mut seen = BTreeSet::new();
    let mut positions = Vec::with_capacity(n);
    for m in ranking_a {
        let m = m.as_ref();
        if !seen.insert(m) {
            return Err(AnalyticsError::InvalidInput(format!("duplicate item {m:?}")));
        }
        let p = pos_b.get(m).ok_or_else(|| {
            AnalyticsError::InvalidInput(format!("{m:?} missing from second ranking"))
        })?;
        positions.push(*p as i64);
    }
    // ranking_a order is 0..n, so a pair is concordant when b keeps it ordered
    let mut net: i64 = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            net += (positions[j] - positions[i]).signum();
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    Ok(net as f64 / pairs)
}

/// Models ordered by number of pairwise wins, most first; ties by name.
/// Every model that appears in a judgment is ranked, including winless ones.
pub fn rank_by_wins(judgments: &[PairwiseJudgment]) -> Vec<String> {
    let mut wins: BTreeMap<&str, usize> = BTreeMap::new();
    for j in judgments {
        wins.entry(&j.model_a).or_insert(0);
        wins.entry(&j.model_b).or_insert(0);
        match j.winner {
            Winner::A => *wins.get_mut(j.model_a.as_str()).unwrap() += 1,
            Winner::B => *wins.get_mut(j.model_b.as_str()).unwrap() += 1,
            Winner::Tie => {}
        }
    }
    let mut ranked: Vec<(&str, usize)> = wins.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.into_iter().map(|(m, _)| m.to_string()).collect()
}

/// wins / (wins + losses) per (model, context); ties are excluded and cells
/// with no decisive judgment are omitted.
pub fn win_rates(judgments: &[PairwiseJudgment]) -> BTreeMap<(String, String), f64> {
    let mut tally: BTreeMap<(String, String), (usize, usize)> = BTreeMap::new();
    for j in judgments {
        let ctx = j.context.clone().unwrap_or_else(|| "all".to_string());
        let (winner, loser) = match j.winner {
            Winner::A => (&j.model_a, &j.model_b),
            Winner::B => (&j.model_b, &j.model_a),
            Winner::Tie => continue,
        };
        tally.entry((winner.clone(), ctx.clone())).or_default().0 += 1;
        tally.entry((loser.clone(), ctx)).or_default().1 += 1;
    }
    tally
        .into_iter()
        .map(|(k, (w, l))| (k, w as f64 / (w + l) as f64))
        .collect()
}

/// Per-answer scores: (question, model) → normalized score, plus the
/// question → context map used for grouping.
#[derive(Debug, Clone, Default)]
pub struct ScoreMatrix {
    pub scores: BTreeMap<(String, String), f64>,
    pub contexts: BTreeMap<String, String>,
}

impl ScoreMatrix {
    /// Averages a score file over references. With `reference` set only rows
    /// scored against that reference are used; otherwise every row whose
    /// reference differs from its candidate contributes.
    pub fn from_file(scorer: &FileScorer, reference: Option<&str>) -> Self {
        let mut sums: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
        for row in scorer.rows() {
            let keep = match reference {
                Some(r) => row.reference_model == r,
                None => row.reference_model != row.candidate_model,
            };
            if !keep || row.candidate_model == row.reference_model {
                continue;
            }
            let e = sums
                .entry((row.question_id.clone(), row.candidate_model.clone()))
                .or_default();
            e.0 += scorer.normalize(row.raw_score);
            e.1 += 1;
        }
        Self {
            scores: sums
                .into_iter()
                .map(|(k, (s, n))| (k, s / n as f64))
                .collect(),
            contexts: BTreeMap::new(),
        }
    }

    /// Lexical scores of every answer against the ground truth (when
    /// `reference` is `None`) or against the named model's answer.
    pub fn from_traces(traces: &[InteractionTrace], reference: Option<&str>) -> Self {
        let mut matrix = Self::default();
        for t in traces {
            matrix.contexts.insert(t.question_id.clone(), t.context.clone());
            let ref_text = match reference {
                None => t.ground_truth.as_deref(),
                Some(m) => t.answers.get(m).map(String::as_str),
            };
            let Some(ref_text) = ref_text else { continue };
            for (model, answer) in &t.answers {
                if Some(model.as_str()) == reference {
                    continue;
                }
                matrix
                    .scores
                    .insert((t.question_id.clone(), model.clone()), lexical_score(answer, ref_text));
            }
        }
        matrix
    }

    pub fn with_contexts(mut self, traces: &[InteractionTrace]) -> Self {
        for t in traces {
            self.contexts.insert(t.question_id.clone(), t.context.clone());
        }
        self
    }

    pub fn get(&self, question_id: &str, model: &str) -> Option<f64> {
        self.scores
            .get(&(question_id.to_string(), model.to_string()))
            .copied()
    }

    pub fn models(&self) -> BTreeSet<String> {
        self.scores.keys().map(|(_, m)| m.clone()).collect()
    }

    /// Judgments for every unordered model pair (alphabetical A/B) on every
    /// question where both models are scored, skipping `exclude`.
    pub fn all_pairs(&self, tie_epsilon: f64, exclude: Option<&str>) -> Vec<PairwiseJudgment> {
        let mut by_question: BTreeMap<&str, Vec<(&str, f64)>> = BTreeMap::new();
        for ((q, m), s) in &self.scores {
            if Some(m.as_str()) == exclude {
                continue;
            }
            by_question.entry(q).or_default().push((m, *s));
        }
        let mut out = Vec::new();
        for (q, entries) in by_question {
            for i in 0..entries.len() {
                for j in (i + 1)..entries.len() {
                    let (a, sa) = entries[i];
                    let (b, sb) = entries[j];
                    out.push(PairwiseJudgment {
                        question_id: q.to_string(),
                        model_a: a.to_string(),
                        model_b: b.to_string(),
                        winner: pairwise_winner(sa, sb, tie_epsilon),
                        context: self.contexts.get(q).cloned(),
                    });
                }
            }
        }
        out
    }

    /// Predicted judgments aligned one-to-one with `truth`.
    pub fn predict(
        &self,
        truth: &[PairwiseJudgment],
        tie_epsilon: f64,
    ) -> Result<Vec<PairwiseJudgment>, AnalyticsError> {
        truth
            .iter()
            .map(|t| {
                let score = |m: &str| {
                    self.get(&t.question_id, m).ok_or_else(|| {
                        AnalyticsError::InvalidInput(format!(
                            "no score for model {m} on question {}",
                            t.question_id
                        ))
                    })
                };
                Ok(PairwiseJudgment {
                    question_id: t.question_id.clone(),
                    model_a: t.model_a.clone(),
                    model_b: t.model_b.clone(),
                    winner: pairwise_winner(score(&t.model_a)?, score(&t.model_b)?, tie_epsilon),
                    context: t
                        .context
                        .clone()
                        .or_else(|| self.contexts.get(&t.question_id).cloned()),
                })
            })
            .collect()
    }
}

#[derive(Debug, Deserialize)]
struct TruthRow {
    question_id: String,
    model_a: String,
    model_b: String,
    winner: String,
    #[serde(default)]
    context: Option<String>,
}

/// Loads human-winner labels: CSV `question_id,model_a,model_b,winner` with an
/// optional `context` column. `winner` is `model_a`/`A`, `model_b`/`B`,
/// `tie`, or the winning model's name.
pub fn load_truth(path: &Path) -> Result<Vec<PairwiseJudgment>, AnalyticsError> {
    let display = path.display().to_string();
    let parse_err = |line: usize, message: String| AnalyticsError::Parse {
        path: display.clone(),
        line,
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| parse_err(1, e.to_string()))?;
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<TruthRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| parse_err(line, e.to_string()))?;
        let w = row.winner.trim();
        let winner = if w.eq_ignore_ascii_case("a") || w == "model_a" || w == row.model_a {
            Winner::A
        } else if w.eq_ignore_ascii_case("b") || w == "model_b" || w == row.model_b {
            Winner::B
        } else if w.to_ascii_lowercase().starts_with("tie") {
            Winner::Tie
        } else {
            return Err(parse_err(line, format!("unrecognized winner {w:?}")));
        };
        out.push(PairwiseJudgment {
            question_id: row.question_id,
            model_a: row.model_a,
            model_b: row.model_b,
            winner,
            context: row.context.filter(|c| !c.is_empty()),
        });
    }
    if out.is_empty() {
        return Err(AnalyticsError::InvalidInput(format!("{display} has no judgments")));
    }
    Ok(out)
}

/// One scored metric: a name for the summary row and its per-answer scores.
pub struct MetricScores {
    pub name: String,
    pub matrix: ScoreMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub metric: String,
    pub accuracy: Option<f64>,
    pub kendall_tau: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct AnalyticsOutput {
    pub summary: Vec<SummaryRow>,
    /// (metric, model, context) → win rate.
    pub win_rates: BTreeMap<(String, String, String), f64>,
    /// (metric, true label, predicted label) → count; empty without truth.
    pub confusion: BTreeMap<(String, String, String), usize>,
}

/// Pairwise winners for every metric. With `truth`, predictions are made on
/// exactly the labelled pairs and scored by accuracy and by Kendall's tau
/// between the win-count rankings; without it every model pair on every
/// question is judged.
pub fn run_analytics(
    metrics: &[MetricScores],
    truth: Option<&[PairwiseJudgment]>,
    tie_epsilon: f64,
) -> Result<AnalyticsOutput, AnalyticsError> {
    if metrics.is_empty() {
        return Err(AnalyticsError::InvalidInput("no score files".into()));
    }
    let mut out = AnalyticsOutput::default();
    for m in metrics {
        let (judgments, accuracy_report, tau) = match truth {
            Some(truth) => {
                let predicted = m.matrix.predict(truth, tie_epsilon)?;
                let report = accuracy(&predicted, truth)?;
                let tau = kendall_tau(&rank_by_wins(&predicted), &rank_by_wins(truth))?;
                (predicted, Some(report), Some(tau))
            }
            None => (m.matrix.all_pairs(tie_epsilon, None), None, None),
        };
        for ((model, ctx), rate) in win_rates(&judgments) {
            out.win_rates.insert((m.name.clone(), model, ctx), rate);
        }
        if let Some(r) = &accuracy_report {
            for ((t, p), n) in &r.confusion {
                out.confusion.insert((m.name.clone(), t.clone(), p.clone()), *n);
            }
        }
        out.summary.push(SummaryRow {
            metric: m.name.clone(),
            accuracy: accuracy_report.map(|r| r.accuracy),
            kendall_tau: tau,
        });
    }
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl AnalyticsOutput {
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("metric,accuracy,kendall_tau\n");
        for r in &self.summary {
            out.push_str(&format!("{},{},{}\n", r.metric, opt(r.accuracy), opt(r.kendall_tau)));
        }
        out
    }

    /// `model,context,win_rate`, with a leading `metric` column when more
    /// than one metric was analysed.
    pub fn win_rates_csv(&self) -> String {
        let multi = self.summary.len() > 1;
        let mut out = String::from(if multi { "metric,model,context,win_rate\n" } else { "model,context,win_rate\n" });
        for ((metric, model, ctx), rate) in &self.win_rates {
            if multi {
                out.push_str(&format!("{metric},"));
            }
            out.push_str(&format!("{model},{ctx},{rate}\n"));
        }
        out
    }

    pub fn confusion_csv(&self) -> String {
        let multi = self.summary.len() > 1;
        let mut out = String::from(if multi { "metric,true_label,pred_label,count\n" } else { "true_label,pred_label,count\n" });
        for ((metric, t, p), n) in &self.confusion {
            if multi {
                out.push_str(&format!("{metric},"));
            }
            out.push_str(&format!("{t},{p},{n}\n"));
        }
        out
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("summary.csv"), self.summary_csv())?;
        std::fs::write(dir.join("win_rates.csv"), self.win_rates_csv())?;
        std::fs::write(dir.join("confusion.csv"), self.confusion_csv())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn j(q: &str, a: &str, b: &str, w: Winner, ctx: &str) -> PairwiseJudgment {
        PairwiseJudgment {
            question_id: q.into(),
            model_a: a.into(),
            model_b: b.into(),
            winner: w,
            context: Some(ctx.into()),
        }
    }

    #[test]
    fn winner_examples() {
        assert_eq!(pairwise_winner(0.8, 0.3, 0.01), Winner::A);
        assert_eq!(pairwise_winner(0.5, 0.5, 0.01), Winner::Tie);
        assert_eq!(pairwise_winner(0.504, 0.5, 0.01), Winner::Tie);
        assert_eq!(pairwise_winner(0.3, 0.8, 0.01), Winner::B);
    }

    #[test]
    fn accuracy_examples() {
        let truth = vec![
            j("1", "a", "b", Winner::A, "x"),
            j("2", "a", "b", Winner::B, "x"),
        ];
        assert_eq!(accuracy(&truth, &truth).unwrap().accuracy, 1.0);
        let flipped = vec![
            j("1", "a", "b", Winner::B, "x"),
            j("2", "a", "b", Winner::A, "x"),
        ];
        let report = accuracy(&flipped, &truth).unwrap();
        assert_eq!(report.accuracy, 0.0);
        assert_eq!(report.confusion[&("a".to_string(), "b".to_string())], 1);
        assert_eq!(report.confusion[&("b".to_string(), "a".to_string())], 1);
    }

    #[test]
    fn accuracy_rejects_misalignment() {
        let a = vec![j("1", "a", "b", Winner::A, "x")];
        let b = vec![j("2", "a", "b", Winner::A, "x")];
        assert!(accuracy(&a, &b).is_err());
        assert!(accuracy(&a, &[]).is_err());
    }

    #[test]
    fn kendall_examples() {
        let a = ["m1", "m2", "m3", "m4"];
        assert_eq!(kendall_tau(&a, &a).unwrap(), 1.0);
        let rev = ["m4", "m3", "m2", "m1"];
        assert_eq!(kendall_tau(&a, &rev).unwrap(), -1.0);
        let swap = ["m1", "m3", "m2", "m4"];
        assert!((kendall_tau(&a, &swap).unwrap() - 4.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn kendall_rejects_mismatched_sets() {
        assert!(kendall_tau(&["a", "b"], &["a", "c"]).is_err());
        assert!(kendall_tau(&["a", "a"], &["a", "b"]).is_err());
        assert!(kendall_tau(&["a", "b", "c"], &["a", "b"]).is_err());
        assert!(kendall_tau(&["a"], &["a"]).is_err());
    }

    #[test]
    fn win_rate_examples() {
        let mut js = Vec::new();
        for i in 0..3 {
            js.push(j(&format!("w{i}"), "m", "n", Winner::A, "c"));
        }
        js.push(j("l", "m", "n", Winner::B, "c"));
        js.push(j("t1", "m", "n", Winner::Tie, "c"));
        js.push(j("t2", "m", "n", Winner::Tie, "c"));
        js.push(j("t3", "m", "n", Winner::Tie, "only-ties"));
        let rates = win_rates(&js);
        assert_eq!(rates[&("m".to_string(), "c".to_string())], 0.75);
        assert_eq!(rates[&("n".to_string(), "c".to_string())], 0.25);
        assert!(!rates.contains_key(&("m".to_string(), "only-ties".to_string())));
    }

    #[test]
    fn rank_by_wins_includes_winless_models() {
        let js = vec![
            j("1", "a", "b", Winner::B, "x"),
            j("2", "a", "c", Winner::A, "x"),
            j("3", "b", "c", Winner::B, "x"),
        ];
        // a:1 b:1 c:1 -> alphabetical
        assert_eq!(rank_by_wins(&js), ["a", "b", "c"]);
        let js = vec![j("1", "a", "b", Winner::B, "x"), j("2", "a", "c", Winner::Tie, "x")];
        assert_eq!(rank_by_wins(&js), ["b", "a", "c"]);
    }

    #[test]
    fn score_matrix_all_pairs_and_predict() {
        let mut m = ScoreMatrix::default();
        m.scores.insert(("q".into(), "a".into()), 0.9);
        m.scores.insert(("q".into(), "b".into()), 0.2);
        m.scores.insert(("q".into(), "c".into()), 0.205);
        m.contexts.insert("q".into(), "ctx".into());
        let pairs = m.all_pairs(0.01, None);
        assert_eq!(pairs.len(), 3);
        assert_eq!(pairs[0].winner, Winner::A);
        assert_eq!(pairs[2].winner, Winner::Tie);
        assert_eq!(m.all_pairs(0.01, Some("a")).len(), 1);

        let truth = vec![j("q", "b", "a", Winner::B, "ctx")];
        let pred = m.predict(&truth, 0.01).unwrap();
        assert_eq!(pred[0].winner, Winner::B);
        assert!(m.predict(&[j("q", "a", "zz", Winner::A, "ctx")], 0.01).is_err());
    }

    fn matrix(rows: &[(&str, &str, f64)], ctx: &[(&str, &str)]) -> ScoreMatrix {
        ScoreMatrix {
            scores: rows
                .iter()
                .map(|(q, m, s)| ((q.to_string(), m.to_string()), *s))
                .collect(),
            contexts: ctx.iter().map(|(q, c)| (q.to_string(), c.to_string())).collect(),
        }
    }

    #[test]
    fn run_analytics_truth_equal_to_predictions() {
        let m = matrix(
            &[("1", "a", 0.9), ("1", "b", 0.5), ("1", "c", 0.1), ("2", "a", 0.8), ("2", "b", 0.2), ("2", "c", 0.4)],
            &[("1", "x"), ("2", "y")],
        );
        let truth = m.all_pairs(0.01, None);
        let metrics = [MetricScores { name: "lexical".into(), matrix: m }];
        let out = run_analytics(&metrics, Some(&truth), 0.01).unwrap();
        assert_eq!(out.summary[0].accuracy, Some(1.0));
        assert_eq!(out.summary[0].kendall_tau, Some(1.0));
        assert!(out.confusion.keys().all(|(_, t, p)| t == p));
        let csv = out.summary_csv();
        assert_eq!(csv, "metric,accuracy,kendall_tau\nlexical,1,1\n");
    }

    #[test]
    fn dominant_model_wins_everywhere() {
        let m = matrix(
            &[("1", "a", 0.9), ("1", "b", 0.5), ("2", "a", 0.6), ("2", "b", 0.1), ("3", "a", 0.7), ("3", "b", 0.3)],
            &[("1", "x"), ("2", "y"), ("3", "z")],
        );
        let out = run_analytics(&[MetricScores { name: "s".into(), matrix: m }], None, 0.01).unwrap();
        for ctx in ["x", "y", "z"] {
            assert_eq!(out.win_rates[&("s".to_string(), "a".to_string(), ctx.to_string())], 1.0);
            assert_eq!(out.win_rates[&("s".to_string(), "b".to_string(), ctx.to_string())], 0.0);
        }
        assert_eq!(out.summary[0].accuracy, None);
        assert!(out.win_rates_csv().starts_with("model,context,win_rate\na,x,1\n"));
        assert!(out.confusion.is_empty());
    }
}
