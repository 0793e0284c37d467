//! Reputation model: per-interaction scores, evaluation weights and the
//! threshold-branched update of the global reputation tuple.
//!
//! Everything here is a pure function over plain values. Exponentials go
//! through `libm` so results are bit-identical on every platform, which the
//! ledger relies on for replayable state roots.

use serde::{Deserialize, Serialize};
use thiserror::Error;

const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReputationError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperParams(String),
}

pub type Result<T> = std::result::Result<T, ReputationError>;

/// Contract-level constants of the reputation model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    /// Step factor used when the new score clears the trust threshold.
    pub psi: f64,
    /// Step factor used when the new score falls below the trust threshold.
    pub xi: f64,
    /// Decay rate of the duration factor, per minute.
    pub lambda: f64,
    /// Emphasis on the human score when building the weighted score.
    pub theta: f64,
    pub alpha_r: f64,
    pub beta_r: f64,
    pub gamma_r: f64,
    pub alpha_u: f64,
    pub beta_u: f64,
    pub gamma_u: f64,
    /// Cap on the elapsed time fed to the duration factor.
    pub d_reset_minutes: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            psi: 1.0 / 3.0,
            xi: 2.0 / 3.0,
            lambda: 1e-3,
            theta: 2.0 / 3.0,
            alpha_r: 1.0 / 3.0,
            beta_r: 1.0 / 3.0,
            gamma_r: 1.0 / 3.0,
            alpha_u: 1.0 / 3.0,
            beta_u: 1.0 / 3.0,
            gamma_u: 1.0 / 3.0,
            d_reset_minutes: 1440.0,
        }
    }
}

fn check_unit(name: &str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(ReputationError::InvalidInput(format!(
            "{name} = {value} is outside [0, 1]"
        )))
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ReputationError::InvalidHyperParams(msg));
        let unit = [
            ("psi", self.psi),
            ("xi", self.xi),
            ("theta", self.theta),
            ("alpha_r", self.alpha_r),
            ("beta_r", self.beta_r),
            ("gamma_r", self.gamma_r),
            ("alpha_u", self.alpha_u),
            ("beta_u", self.beta_u),
            ("gamma_u", self.gamma_u),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} is outside [0, 1]"));
            }
        }
        if !(self.psi > 0.0 && self.psi < 1.0) || !(self.xi > 0.0 && self.xi < 1.0) {
            return bad("psi and xi must lie strictly inside (0, 1)".into());
        }
        if self.xi <= self.psi {
            return bad(format!(
                "xi ({}) must exceed psi ({})",
                self.xi, self.psi
            ));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda = {} must be positive", self.lambda));
        }
        if !(self.d_reset_minutes > 0.0) || !self.d_reset_minutes.is_finite() {
            return bad(format!(
                "d_reset_minutes = {} must be positive",
                self.d_reset_minutes
            ));
        }
        let answer_sum = self.alpha_r + self.beta_r + self.gamma_r;
        if (answer_sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return bad(format!("alpha_r + beta_r + gamma_r = {answer_sum}, expected 1"));
        }
        let user_sum = self.alpha_u + self.beta_u + self.gamma_u;
        if (user_sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return bad(format!("alpha_u + beta_u + gamma_u = {user_sum}, expected 1"));
        }
        Ok(())
    }
}

/// Automatic, human and weighted reputation of one model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReputationTuple {
    pub r_auto: f64,
    pub r_human: f64,
    pub r_weighted: f64,
    pub auto_eval_count: u64,
    pub human_eval_count: u64,
}

impl ReputationTuple {
    pub fn new(r_auto: f64, r_human: f64, r_weighted: f64) -> Self {
        Self {
            r_auto,
            r_human,
            r_weighted,
            auto_eval_count: 0,
            human_eval_count: 0,
        }
    }

    pub fn uniform(value: f64) -> Self {
        Self::new(value, value, value)
    }
}

/// Questionnaire constructs, already mapped onto [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HumanFeedback {
    /// Reliability of the answer.
    pub a_trust: f64,
    /// Completeness of the answer.
    pub a_complete: f64,
    /// Utility of the answer.
    pub a_utility: f64,
    /// Familiarity of the evaluator with the context.
    pub familiarity: f64,
    /// Evaluator's trust in the model's expertise.
    pub llm_trust: f64,
    /// Evaluator's uncertainty about the rating.
    pub uncertainty: f64,
    /// Minutes since the evaluator's previous evaluation.
    pub duration_minutes: f64,
}

impl HumanFeedback {
    pub fn validate(&self) -> Result<()> {
        check_unit("a_trust", self.a_trust)?;
        check_unit("a_complete", self.a_complete)?;
        check_unit("a_utility", self.a_utility)?;
        check_unit("familiarity", self.familiarity)?;
        check_unit("llm_trust", self.llm_trust)?;
        check_unit("uncertainty", self.uncertainty)?;
        if !(self.duration_minutes >= 0.0) {
            return Err(ReputationError::InvalidInput(format!(
                "duration_minutes = {} must be non-negative",
                self.duration_minutes
            )));
        }
        Ok(())
    }
}

/// Maps a 1..=5 Likert answer onto [0, 1].
pub fn likert_to_unit(value: u8) -> Result<f64> {
    if !(1..=5).contains(&value) {
        return Err(ReputationError::InvalidInput(format!(
            "Likert value {value} outside 1..=5"
        )));
    }
    Ok(f64::from(value - 1) / 4.0)
}

/// Per-reference scores of one answer together with the references' current
/// weighted reputations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoEvalInput {
    pub pair_scores: Vec<f64>,
    pub ref_reputations: Vec<f64>,
}

impl AutoEvalInput {
    pub fn new(pair_scores: Vec<f64>, ref_reputations: Vec<f64>) -> Result<Self> {
        let input = Self {
            pair_scores,
            ref_reputations,
        };
        input.validate()?;
        Ok(input)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pair_scores.is_empty() || self.ref_reputations.is_empty() {
            return Err(ReputationError::InvalidInput(
                "at least one reference is required".into(),
            ));
        }
        if self.pair_scores.len() != self.ref_reputations.len() {
            return Err(ReputationError::InvalidInput(format!(
                "{} pair scores but {} reference reputations",
                self.pair_scores.len(),
                self.ref_reputations.len()
            )));
        }
        for &s in &self.pair_scores {
            check_unit("pair score", s)?;
        }
        for &r in &self.ref_reputations {
            check_unit("reference reputation", r)?;
        }
        Ok(())
    }

    /// Automatic score and weight of this evaluation.
    pub fn evaluate(&self) -> Result<(f64, f64)> {
        self.validate()?;
        Ok((auto_score(&self.pair_scores)?, auto_weight(&self.ref_reputations)?))
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Mean of the per-reference scores.
pub fn auto_score(pair_scores: &[f64]) -> Result<f64> {
    if pair_scores.is_empty() {
        return Err(ReputationError::InvalidInput("no pair scores".into()));
    }
    Ok(mean(pair_scores).clamp(0.0, 1.0))
}

/// Mean reputation of the reference models.
pub fn auto_weight(ref_reputations: &[f64]) -> Result<f64> {
    if ref_reputations.is_empty() {
        return Err(ReputationError::InvalidInput(
            "no reference reputations".into(),
        ));
    }
    Ok(mean(ref_reputations).clamp(0.0, 1.0))
}

pub fn human_score(fb: &HumanFeedback, hp: &HyperParams) -> f64 {
    (hp.alpha_r * fb.a_trust + hp.beta_r * fb.a_complete + hp.gamma_r * fb.a_utility)
        .clamp(0.0, 1.0)
}

/// Evaluator-quality part of the human weight, before the duration factor.
pub fn evaluator_weight(fb: &HumanFeedback, hp: &HyperParams) -> f64 {
    (hp.alpha_u * fb.familiarity + hp.beta_u * fb.llm_trust + hp.gamma_u * (1.0 - fb.uncertainty))
        .clamp(0.0, 1.0)
}

/// `(1 - e^(-λD)) / (1 + e^(-λD))`, zero for back-to-back evaluations and
/// approaching one as the gap grows.
pub fn duration_factor(d_minutes: f64, hp: &HyperParams) -> Result<f64> {
    if !(d_minutes >= 0.0) {
        return Err(ReputationError::InvalidInput(format!(
            "duration {d_minutes} must be non-negative"
        )));
    }
    let decay = libm::exp(-hp.lambda * d_minutes);
    Ok((1.0 - decay) / (1.0 + decay))
}

pub fn human_weight(fb: &HumanFeedback, hp: &HyperParams) -> Result<f64> {
    let fd = duration_factor(fb.duration_minutes, hp)?;
    Ok((evaluator_weight(fb, hp) * fd).clamp(0.0, 1.0))
}

/// θ-weighted combination of the human and automatic (score, weight) pairs.
pub fn combine_theta(s_h: f64, s_a: f64, w_h: f64, w_a: f64, hp: &HyperParams) -> (f64, f64) {
    let t = hp.theta;
    let s = t * s_h + (1.0 - t) * s_a;
    let w = t * w_h + (1.0 - t) * w_a;
    (s.clamp(0.0, 1.0), w.clamp(0.0, 1.0))
}

/// Multiplier applied to `s_calc - r` for one update: `ψω` when the score
/// clears the threshold, `ξω` otherwise.
pub fn step_factor(s_calc: f64, omega: f64, threshold: f64, hp: &HyperParams) -> f64 {
    if s_calc >= threshold {
        hp.psi * omega
    } else {
        hp.xi * omega
    }
}

pub fn update_reputation(r_i: f64, s_calc: f64, omega: f64, threshold: f64, hp: &HyperParams) -> f64 {
    let a = step_factor(s_calc, omega, threshold, hp);
    let next = (1.0 - a) * r_i + a * s_calc;
    // keep the convex combination inside its endpoints despite rounding
    next.clamp(r_i.min(s_calc), r_i.max(s_calc))
}

pub fn effective_duration(elapsed_minutes: f64, hp: &HyperParams) -> f64 {
    elapsed_minutes.min(hp.d_reset_minutes)
}
