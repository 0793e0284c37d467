//! Independent re-derivation of every reputation from the event log.
//!
//! The verifier trusts only the identity fields of each event (model, record
//! CID, user, time, feedback payload) and the archived evaluation records.
//! Scores, weights, thresholds and updates are recomputed here with their own
//! arithmetic, then compared with the ledger's final state.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::ledger::{Address, Event, EventKind, LedgerState};
use crate::reputation::HyperParams;
use crate::store::{Cid, EvaluationRecord, OffchainStore};
use crate::ModelId;

pub const AUDIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Rep {
    auto: f64,
    human: f64,
    weighted: f64,
    auto_count: u64,
    human_count: u64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct AuditReport {
    pub events: usize,
    pub auto_evals: usize,
    pub human_evals: usize,
    pub models: usize,
    /// Largest absolute difference between a recomputed and a ledger value.
    pub max_abs_error: f64,
    pub mismatches: Vec<String>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.mismatches.is_empty()
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn step(r: f64, s: f64, w: f64, threshold: f64, hp: &HyperParams) -> f64 {
    let rate = if s >= threshold { hp.psi } else { hp.xi } * w;
    let next = r + rate * (s - r);
    next.max(r.min(s)).min(r.max(s))
}

fn duration_factor(d: f64, lambda: f64) -> f64 {
    let e = libm::exp(-lambda * d);
    (1.0 - e) / (1.0 + e)
}

struct Verifier<'a> {
    hp: &'a HyperParams,
    store: &'a OffchainStore,
    reps: BTreeMap<ModelId, Rep>,
    last_eval: BTreeMap<Address, u64>,
    report: AuditReport,
}

impl Verifier<'_> {
    fn compare(&mut self, what: impl FnOnce() -> String, ours: f64, theirs: f64) {
        let err = (ours - theirs).abs();
        if err.is_nan() || err > AUDIT_TOLERANCE {
            self.report
                .mismatches
                .push(format!("{}: recomputed {ours}, ledger {theirs}", what()));
        }
        if err.is_finite() {
            self.report.max_abs_error = self.report.max_abs_error.max(err);
        }
    }

    fn threshold(&self, f: impl Fn(&Rep) -> f64) -> f64 {
        let values: Vec<f64> = self.reps.values().map(f).collect();
        mean(&values)
    }

    fn record(&mut self, seq: u64, cid: &Cid, model_id: ModelId) -> Option<EvaluationRecord> {
        let bytes = match self.store.get_bytes(cid) {
            Ok(b) => b,
            Err(_) => {
                self.report
                    .mismatches
                    .push(format!("event {seq}: record {cid} does not resolve"));
                return None;
            }
        };
        if Cid::of_bytes(&bytes) != *cid {
            self.report
                .mismatches
                .push(format!("event {seq}: record {cid} does not hash to its CID"));
            return None;
        }
        match serde_json::from_slice::<EvaluationRecord>(&bytes) {
            Ok(r) if r.target_model == model_id && !r.pair_scores.is_empty() => Some(r),
            Ok(_) => {
                self.report
                    .mismatches
                    .push(format!("event {seq}: record {cid} is not about model {model_id}"));
                None
            }
            Err(e) => {
                self.report
                    .mismatches
                    .push(format!("event {seq}: record {cid} does not decode: {e}"));
                None
            }
        }
    }

    fn visit(&mut self, ev: &Event) {
        let seq = ev.seq;
        match &ev.kind {
            EventKind::ModelAdded { model_id, .. } => {
                let init = if self.reps.is_empty() {
                    Rep {
                        auto: 0.5,
                        human: 0.5,
                        weighted: 0.5,
                        ..Rep::default()
                    }
                } else {
                    Rep {
                        auto: self.threshold(|r| r.auto),
                        human: self.threshold(|r| r.human),
                        weighted: self.threshold(|r| r.weighted),
                        ..Rep::default()
                    }
                };
                self.reps.insert(*model_id, init);
            }
            EventKind::AutoEvaluated {
                model_id,
                record_cid,
                r_auto_after,
                ..
            } => {
                self.report.auto_evals += 1;
                let Some(rec) = self.record(seq, record_cid, *model_id) else {
                    return;
                };
                for (r, rep) in rec.references.iter().zip(&rec.reference_reputations) {
                    let ours = self.reps.get(&r.model_id).map_or(f64::NAN, |x| x.weighted);
                    self.compare(
                        || format!("event {seq}: reputation of reference {}", r.model_id),
                        ours,
                        *rep,
                    );
                }
                let s_a = mean(&rec.pair_scores);
                let w_a = mean(&rec.reference_reputations);
                let threshold = self.threshold(|r| r.auto);
                let Some(rep) = self.reps.get_mut(model_id) else {
                    self.report
                        .mismatches
                        .push(format!("event {seq}: unknown model {model_id}"));
                    return;
                };
                rep.auto = step(rep.auto, s_a, w_a, threshold, self.hp);
                rep.auto_count += 1;
                let ours = rep.auto;
                self.compare(|| format!("event {seq}: reported r_auto"), ours, *r_auto_after);
            }
            EventKind::HumanEvaluated {
                model_id,
                record_cid,
                user,
                feedback: fb,
                r_human_after,
                r_weighted_after,
                ..
            } => {
                self.report.human_evals += 1;
                let Some(rec) = self.record(seq, record_cid, *model_id) else {
                    return;
                };
                let hp = self.hp;
                let elapsed = self
                    .last_eval
                    .insert(*user, ev.logical_time)
                    .map_or(hp.d_reset_minutes, |prev| (ev.logical_time - prev) as f64);
                let d = elapsed.min(hp.d_reset_minutes);
                let s_h = hp.alpha_r * fb.a_trust + hp.beta_r * fb.a_complete + hp.gamma_r * fb.a_utility;
                let quality =
                    hp.alpha_u * fb.familiarity + hp.beta_u * fb.llm_trust + hp.gamma_u * (1.0 - fb.uncertainty);
                let w_h = quality * duration_factor(d, hp.lambda);
                let s_theta = hp.theta * s_h + (1.0 - hp.theta) * rec.s_a;
                let w_theta = if w_h == 0.0 {
                    0.0
                } else {
                    hp.theta * w_h + (1.0 - hp.theta) * rec.w_a
                };
                let t_h = self.threshold(|r| r.human);
                let t_w = self.threshold(|r| r.weighted);
                let Some(rep) = self.reps.get_mut(model_id) else {
                    self.report
                        .mismatches
                        .push(format!("event {seq}: unknown model {model_id}"));
                    return;
                };
                rep.human = step(rep.human, s_h, w_h, t_h, hp);
                rep.weighted = step(rep.weighted, s_theta, w_theta, t_w, hp);
                rep.human_count += 1;
                let (human, weighted) = (rep.human, rep.weighted);
                self.compare(|| format!("event {seq}: reported r_human"), human, *r_human_after);
                self.compare(|| format!("event {seq}: reported r_weighted"), weighted, *r_weighted_after);
            }
            EventKind::Registered { .. }
            | EventKind::RoleGranted { .. }
            | EventKind::LivenessChanged { .. }
            | EventKind::Failed { .. } => {}
        }
    }
}

/// Replays `events` from genesis and checks the result against `state`.
pub fn audit(events: &[Event], store: &OffchainStore, hp: &HyperParams, state: &LedgerState) -> AuditReport {
    let mut v = Verifier {
        hp,
        store,
        reps: BTreeMap::new(),
        last_eval: BTreeMap::new(),
        report: AuditReport {
            events: events.len(),
            ..AuditReport::default()
        },
    };
    for ev in events {
        v.visit(ev);
    }
    v.report.models = v.reps.len();
    if v.reps.len() != state.models.len() {
        v.report.mismatches.push(format!(
            "recomputed {} models, ledger holds {}",
            v.reps.len(),
            state.models.len()
        ));
    }
    let reps = std::mem::take(&mut v.reps);
    for (id, ours) in &reps {
        let Some(m) = state.models.get(id) else {
            v.report.mismatches.push(format!("model {id} missing from ledger"));
            continue;
        };
        let theirs = m.reputation;
        v.compare(|| format!("model {id} r_auto"), ours.auto, theirs.r_auto);
        v.compare(|| format!("model {id} r_human"), ours.human, theirs.r_human);
        v.compare(|| format!("model {id} r_weighted"), ours.weighted, theirs.r_weighted);
        if ours.auto_count != theirs.auto_eval_count || ours.human_count != theirs.human_eval_count {
            v.report.mismatches.push(format!(
                "model {id} evaluation counts: recomputed ({}, {}), ledger ({}, {})",
                ours.auto_count, ours.human_count, theirs.auto_eval_count, theirs.human_eval_count
            ));
        }
    }
    v.report
}
