//! Simulated evaluation oracle.
//!
//! For each user interaction the oracle picks the top-k online reference
//! models, asks them the same prompt, scores the target answer against each
//! reference, archives the evaluation record off-chain and submits the
//! automatic evaluation to the ledger. With several workers the record of
//! the median worker (by automatic score) is the one submitted.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, BackendSet};
use crate::ledger::{Address, Ledger, LedgerError, LedgerState, TxOp};
use crate::reputation;
use crate::scorers::{ScorePair, Scorer, ScorerError};
use crate::store::{Cid, EvaluationRecord, ModelDetails, OffchainStore, ReferenceAnswer, StoreError};
use crate::ModelId;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("need {needed} reference models, only {available} available")]
    InsufficientReferences { needed: usize, available: usize },
    #[error("target model {0} is not registered or offline")]
    TargetUnavailable(ModelId),
    #[error("no model named {0:?}")]
    UnknownModel(String),
    #[error("invalid oracle configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    /// Rank candidates by their weighted reputation.
    #[serde(alias = "global_top_k", alias = "GlobalTopK")]
    Global,
    /// Rank by the candidate's running mean automatic score in the prompt's
    /// context, falling back to weighted reputation below `min_samples`.
    #[serde(alias = "contextual_top_k", alias = "ContextualTopK")]
    Contextual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub k: usize,
    pub selection: Selection,
    pub workers: usize,
    pub min_samples: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            k: 3,
            selection: Selection::Global,
            workers: 1,
            min_samples: 5,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<(), OracleError> {
        if self.k == 0 {
            return Err(OracleError::InvalidConfig("k must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(OracleError::InvalidConfig("workers must be at least 1".into()));
        }
        Ok(())
    }
}

/// Running mean of automatic scores per (context, model).
#[derive(Debug, Clone, Default)]
pub struct ContextStats {
    sums: BTreeMap<(String, ModelId), (f64, u64)>,
}

impl ContextStats {
    pub fn record(&mut self, context: &str, model: ModelId, s_a: f64) {
        let e = self.sums.entry((context.to_string(), model)).or_default();
        e.0 += s_a;
        e.1 += 1;
    }

    pub fn mean(&self, context: &str, model: ModelId, min_samples: usize) -> Option<f64> {
        self.sums
            .get(&(context.to_string(), model))
            .filter(|(_, n)| *n as usize >= min_samples.max(1))
            .map(|(s, n)| s / *n as f64)
    }
}

/// The `k` best online models other than `target`, best first; ties go to
/// the lower model id.
pub fn select_references(
    state: &LedgerState,
    target: ModelId,
    context: &str,
    k: usize,
    cfg: &OracleConfig,
    stats: &ContextStats,
) -> Result<Vec<ModelId>, OracleError> {
    let mut candidates: Vec<(f64, ModelId)> = state
        .models
        .values()
        .filter(|m| m.online && m.model_id != target)
        .map(|m| {
            let key = match cfg.selection {
                Selection::Global => m.reputation.r_weighted,
                Selection::Contextual => stats
                    .mean(context, m.model_id, cfg.min_samples)
                    .unwrap_or(m.reputation.r_weighted),
            };
            (key, m.model_id)
        })
        .collect();
    if candidates.len() < k {
        return Err(OracleError::InsufficientReferences {
            needed: k,
            available: candidates.len(),
        });
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(candidates.into_iter().take(k).map(|(_, id)| id).collect())
}

/// What the user sent and what the target model answered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub user: Address,
    pub target_model: ModelId,
    pub context: String,
    /// Dataset question, when the prompt came from one.
    pub question_id: Option<String>,
    pub prompt: String,
    pub answer: String,
    pub logical_time: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub record_cid: Cid,
    pub s_a: f64,
    pub w_a: f64,
}

#[derive(Debug, Clone)]
struct WorkerReport {
    references: Vec<ReferenceAnswer>,
    pair_scores: Vec<f64>,
    reputations: Vec<f64>,
    unreachable: Vec<ModelId>,
    s_a: f64,
}

/// Median of worker reports by automatic score (lower median for even
/// counts), ties resolved by worker order.
fn median_report(mut reports: Vec<WorkerReport>) -> WorkerReport {
    reports.sort_by(|a, b| a.s_a.total_cmp(&b.s_a));
    let mid = (reports.len() - 1) / 2;
    reports.swap_remove(mid)
}

pub struct Oracle {
    address: Address,
    cfg: OracleConfig,
    names: BTreeMap<ModelId, String>,
    stats: ContextStats,
}

impl Oracle {
    pub fn new(address: Address, cfg: OracleConfig) -> Self {
        Self {
            address,
            cfg,
            names: BTreeMap::new(),
            stats: ContextStats::default(),
        }
    }

    pub fn address(&self) -> Address {
        self.address
    }

    pub fn config(&self) -> &OracleConfig {
        &self.cfg
    }

    pub fn stats(&self) -> &ContextStats {
        &self.stats
    }

    /// Backend name of a model, read from its off-chain details document.
    pub fn model_name(&mut self, state: &LedgerState, store: &OffchainStore, id: ModelId) -> Result<String, OracleError> {
        if let Some(n) = self.names.get(&id) {
            return Ok(n.clone());
        }
        let record = state
            .model(id)
            .ok_or_else(|| LedgerError::NotFound(format!("model {id}")))?;
        let details: ModelDetails = store.get(&record.cid)?;
        self.names.insert(id, details.name.clone());
        Ok(details.name)
    }

    fn run_worker(
        ix: &Interaction,
        target_name: &str,
        refs: &[(ModelId, String, f64)],
        backends: &BackendSet,
        scorer: &dyn Scorer,
    ) -> Result<WorkerReport, OracleError> {
        let qid = ix.question_id.as_deref().unwrap_or("");
        let mut report = WorkerReport {
            references: Vec::new(),
            pair_scores: Vec::new(),
            reputations: Vec::new(),
            unreachable: Vec::new(),
            s_a: 0.0,
        };
        for (id, name, rep) in refs {
            let answer = match &ix.question_id {
                Some(q) => backends.query(name, q, ix.logical_time),
                None => backends.query_text(name, &ix.prompt, ix.logical_time),
            };
            let answer = match answer {
                Ok(a) => a,
                Err(BackendError::Unreachable(_)) | Err(BackendError::NotFound(_)) => {
                    report.unreachable.push(*id);
                    continue;
                }
                Err(BackendError::NoAnswer { .. }) => continue,
                Err(e) => return Err(e.into()),
            };
            let score = scorer.score(&ScorePair {
                question_id: qid,
                candidate_model: target_name,
                reference_model: name,
                candidate: &ix.answer,
                reference: &answer,
            })?;
            report.references.push(ReferenceAnswer {
                model_id: *id,
                answer,
            });
            report.pair_scores.push(score);
            report.reputations.push(*rep);
        }
        if !report.pair_scores.is_empty() {
            report.s_a = reputation::auto_score(&report.pair_scores).expect("non-empty");
        }
        Ok(report)
    }

    /// Scores `ix`, archives the record and submits the automatic
    /// evaluation. Unreachable references are skipped and reported offline.
    pub fn evaluate_interaction(
        &mut self,
        ix: &Interaction,
        ledger: &mut Ledger,
        backends: &BackendSet,
        scorer: &dyn Scorer,
    ) -> Result<Evaluation, OracleError> {
        self.cfg.validate()?;
        let state = ledger.state();
        if !state.model(ix.target_model).is_some_and(|m| m.online) {
            return Err(OracleError::TargetUnavailable(ix.target_model));
        }
        let available = state
            .models
            .values()
            .filter(|m| m.online && m.model_id != ix.target_model)
            .count();
        if available == 0 {
            return Err(OracleError::InsufficientReferences {
                needed: 1,
                available: 0,
            });
        }
        let k = self.cfg.k.min(available);
        let ids = select_references(state, ix.target_model, &ix.context, k, &self.cfg, &self.stats)?;
        let store = ledger.store().clone();
        let target_name = self.model_name(state, &store, ix.target_model)?;
        let mut refs = Vec::with_capacity(ids.len());
        for id in ids {
            let name = self.model_name(state, &store, id)?;
            refs.push((id, name, state.model(id).unwrap().reputation.r_weighted));
        }

        let reports: Vec<Result<WorkerReport, OracleError>> = if self.cfg.workers == 1 {
            vec![Self::run_worker(ix, &target_name, &refs, backends, scorer)]
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = (0..self.cfg.workers)
                    .map(|_| s.spawn(|| Self::run_worker(ix, &target_name, &refs, backends, scorer)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("oracle worker panicked"))
                    .collect()
            })
        };
        let report = median_report(reports.into_iter().collect::<Result<_, _>>()?);

        for id in &report.unreachable {
            ledger.submit(
                self.address,
                TxOp::SetLiveness {
                    model_id: *id,
                    online: false,
                },
                ix.logical_time,
            )?;
        }
        if report.pair_scores.is_empty() {
            return Err(OracleError::InsufficientReferences {
                needed: 1,
                available: 0,
            });
        }
        let w_a = reputation::auto_weight(&report.reputations).expect("non-empty");
        let record = EvaluationRecord {
            prompt: ix.prompt.clone(),
            context: ix.context.clone(),
            target_model: ix.target_model,
            target_answer: ix.answer.clone(),
            references: report.references,
            pair_scores: report.pair_scores,
            reference_reputations: report.reputations,
            s_a: report.s_a,
            w_a,
            logical_time: ix.logical_time,
        };
        let record_cid = store.put_record(&record)?;
        ledger.submit(
            self.address,
            TxOp::AutoEval {
                model_id: ix.target_model,
                s_a: report.s_a,
                w_a,
                record_cid,
            },
            ix.logical_time,
        )?;
        self.stats.record(&ix.context, ix.target_model, report.s_a);
        Ok(Evaluation {
            record_cid,
            s_a: report.s_a,
            w_a,
        })
    }

    /// Probes every registered model and submits a liveness transaction for
    /// each status change. A model without a backend counts as offline.
    pub fn liveness_sweep(
        &mut self,
        ledger: &mut Ledger,
        backends: &BackendSet,
        at_time: u64,
    ) -> Result<Vec<(ModelId, bool)>, OracleError> {
        let store = ledger.store().clone();
        let mut changes = Vec::new();
        let models: Vec<(ModelId, bool)> = ledger
            .state()
            .models
            .values()
            .map(|m| (m.model_id, m.online))
            .collect();
        for (id, was_online) in models {
            let name = self.model_name(ledger.state(), &store, id)?;
            let online = backends.probe(&name, at_time).unwrap_or(false);
            if online != was_online {
                ledger.submit(self.address, TxOp::SetLiveness { model_id: id, online }, at_time)?;
                changes.push((id, online));
            }
        }
        Ok(changes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{BackendScript, InteractionTrace, OfflineWindow};
    use crate::ledger::Role;
    use crate::reputation::{HyperParams, ReputationTuple};
    use crate::scorers::LexicalScorer;
    use std::sync::Arc;

    struct World {
        ledger: Ledger,
        oracle: Oracle,
        user: Address,
    }

    fn world(names: &[&str], cfg: OracleConfig) -> World {
        let mut ledger = Ledger::new(HyperParams::default(), Arc::new(OffchainStore::in_memory()));
        let reg = |ledger: &mut Ledger, name: &str, role| {
            let a = Address::from_pubkey(name.as_bytes());
            ledger
                .submit(
                    a,
                    TxOp::Register {
                        pubkey: hex::encode(name),
                        role,
                    },
                    0,
                )
                .unwrap();
            a
        };
        let admin = reg(&mut ledger, "admin", Role::Admin);
        let dev = reg(&mut ledger, "dev", Role::Developer);
        let oracle = reg(&mut ledger, "oracle", Role::User);
        let user = reg(&mut ledger, "user", Role::User);
        ledger
            .submit(
                admin,
                TxOp::GrantRole {
                    target: oracle,
                    role: Role::Oracle,
                },
                0,
            )
            .unwrap();
        for n in names {
            let cid = ledger.store().put(&ModelDetails::named(n)).unwrap();
            ledger
                .submit(
                    dev,
                    TxOp::AddModel {
                        cid,
                        context_tags: vec![],
                    },
                    0,
                )
                .unwrap();
        }
        World {
            ledger,
            oracle: Oracle::new(oracle, cfg),
            user,
        }
    }

    fn set_weighted(ledger: &mut Ledger, values: &[f64]) -> LedgerState {
        let mut state = ledger.state().clone();
        for (i, v) in values.iter().enumerate() {
            state.models.get_mut(&(i as ModelId)).unwrap().reputation = ReputationTuple::uniform(*v);
        }
        state
    }

    #[test]
    fn selects_top_k_excluding_target() {
        let mut w = world(&["a", "b", "c"], OracleConfig::default());
        let state = set_weighted(&mut w.ledger, &[0.9, 0.5, 0.7]);
        let cfg = OracleConfig::default();
        let refs = select_references(&state, 0, "x", 2, &cfg, &ContextStats::default()).unwrap();
        assert_eq!(refs, vec![2, 1]);
        let all = select_references(&state, 1, "x", 2, &cfg, &ContextStats::default()).unwrap();
        assert_eq!(all, vec![0, 2]);
        assert!(matches!(
            select_references(&state, 0, "x", 3, &cfg, &ContextStats::default()),
            Err(OracleError::InsufficientReferences { needed: 3, available: 2 })
        ));
    }

    #[test]
    fn ties_go_to_lower_id() {
        let mut w = world(&["a", "b", "c", "d"], OracleConfig::default());
        let state = set_weighted(&mut w.ledger, &[0.1, 0.6, 0.6, 0.2]);
        let refs =
            select_references(&state, 0, "x", 1, &OracleConfig::default(), &ContextStats::default())
                .unwrap();
        assert_eq!(refs, vec![1]);
    }

    #[test]
    fn contextual_selection_uses_running_means() {
        let mut w = world(&["a", "b", "c"], OracleConfig::default());
        let state = set_weighted(&mut w.ledger, &[0.5, 0.9, 0.2]);
        let cfg = OracleConfig {
            selection: Selection::Contextual,
            min_samples: 2,
            ..OracleConfig::default()
        };
        let mut stats = ContextStats::default();
        stats.record("law", 2, 0.95);
        assert_eq!(select_references(&state, 0, "law", 1, &cfg, &stats).unwrap(), vec![1]);
        stats.record("law", 2, 0.95);
        assert_eq!(select_references(&state, 0, "law", 1, &cfg, &stats).unwrap(), vec![2]);
        // other contexts are unaffected
        assert_eq!(select_references(&state, 0, "math", 1, &cfg, &stats).unwrap(), vec![1]);
    }

    fn backends(answers: &[(&str, &str)], scripts: Vec<BackendScript>) -> BackendSet {
        let trace = InteractionTrace {
            question_id: "q1".into(),
            context: "general".into(),
            question: "what?".into(),
            ground_truth: None,
            answers: answers.iter().map(|(m, a)| (m.to_string(), a.to_string())).collect(),
        };
        BackendSet::new(vec![trace], scripts).unwrap()
    }

    fn interaction(w: &World, target: ModelId, answer: &str, t: u64) -> Interaction {
        Interaction {
            user: w.user,
            target_model: target,
            context: "general".into(),
            question_id: Some("q1".into()),
            prompt: "what?".into(),
            answer: answer.into(),
            logical_time: t,
        }
    }

    #[test]
    fn identical_references_score_one() {
        let mut w = world(&["t", "r1", "r2"], OracleConfig::default());
        let b = backends(
            &[("t", "same words"), ("r1", "same words"), ("r2", "Same, words!")],
            ["t", "r1", "r2"].map(BackendScript::always_online).to_vec(),
        );
        let ix = interaction(&w, 0, "same words", 1);
        let ev = w.oracle.evaluate_interaction(&ix, &mut w.ledger, &b, &LexicalScorer).unwrap();
        assert_eq!(ev.s_a, 1.0);
        assert_eq!(ev.w_a, 0.5);
        let rec: EvaluationRecord = w.ledger.store().get(&ev.record_cid).unwrap();
        assert_eq!(rec.references.len(), 2);
        assert!(rec.references.iter().all(|r| r.model_id != 0));
        assert_eq!(w.ledger.state().model(0).unwrap().reputation.auto_eval_count, 1);
    }

    #[test]
    fn disjoint_references_score_zero() {
        let mut w = world(&["t", "r1"], OracleConfig::default());
        let b = backends(
            &[("t", "alpha beta"), ("r1", "gamma delta")],
            ["t", "r1"].map(BackendScript::always_online).to_vec(),
        );
        let ev = w
            .oracle
            .evaluate_interaction(&interaction(&w, 0, "alpha beta", 1), &mut w.ledger, &b, &LexicalScorer)
            .unwrap();
        assert_eq!(ev.s_a, 0.0);
    }

    #[test]
    fn offline_reference_is_skipped_and_reported() {
        let mut w = world(&["t", "r1", "r2"], OracleConfig::default());
        let mut down = BackendScript::always_online("r1");
        down.offline = vec![OfflineWindow { from: 0, to: 100 }];
        let b = backends(
            &[("t", "a b"), ("r1", "a b"), ("r2", "a c")],
            vec![BackendScript::always_online("t"), down, BackendScript::always_online("r2")],
        );
        let ev = w
            .oracle
            .evaluate_interaction(&interaction(&w, 0, "a b", 5), &mut w.ledger, &b, &LexicalScorer)
            .unwrap();
        assert_eq!(ev.s_a, 0.5);
        assert!(!w.ledger.state().model(1).unwrap().online);
        let rec: EvaluationRecord = w.ledger.store().get(&ev.record_cid).unwrap();
        assert_eq!(rec.references.len(), 1);
    }

    #[test]
    fn lone_model_has_no_references() {
        let mut w = world(&["t"], OracleConfig::default());
        let b = backends(&[("t", "a")], vec![BackendScript::always_online("t")]);
        assert!(matches!(
            w.oracle.evaluate_interaction(&interaction(&w, 0, "a", 1), &mut w.ledger, &b, &LexicalScorer),
            Err(OracleError::InsufficientReferences { .. })
        ));
    }

    #[test]
    fn worker_median_matches_single_worker() {
        let run = |workers| {
            let mut w = world(
                &["t", "r1", "r2"],
                OracleConfig {
                    workers,
                    ..OracleConfig::default()
                },
            );
            let b = backends(
                &[("t", "a b c"), ("r1", "a b d"), ("r2", "a x y")],
                ["t", "r1", "r2"].map(BackendScript::always_online).to_vec(),
            );
            w.oracle
                .evaluate_interaction(&interaction(&w, 0, "a b c", 1), &mut w.ledger, &b, &LexicalScorer)
                .unwrap()
        };
        assert_eq!(run(1), run(3));
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn median_report_picks_lower_middle() {
        let r = |s| WorkerReport {
            references: vec![],
            pair_scores: vec![],
            reputations: vec![],
            unreachable: vec![],
            s_a: s,
        };
        assert_eq!(median_report(vec![r(0.9), r(0.1), r(0.5)]).s_a, 0.5);
        assert_eq!(median_report(vec![r(0.9), r(0.1), r(0.5), r(0.7)]).s_a, 0.5);
    }

    #[test]
    fn liveness_sweep_tracks_schedule() {
        let mut w = world(&["a", "b"], OracleConfig::default());
        let mut flaky = BackendScript::always_online("b");
        flaky.offline = vec![OfflineWindow { from: 10, to: 20 }];
        let b = backends(&[("a", "x"), ("b", "y")], vec![BackendScript::always_online("a"), flaky]);
        assert!(w.oracle.liveness_sweep(&mut w.ledger, &b, 0).unwrap().is_empty());
        assert_eq!(w.oracle.liveness_sweep(&mut w.ledger, &b, 10).unwrap(), vec![(1, false)]);
        assert_eq!(w.ledger.state().list_running().len(), 1);
        let log_len = w.ledger.log().len();
        assert!(w.oracle.liveness_sweep(&mut w.ledger, &b, 15).unwrap().is_empty());
        assert_eq!(w.ledger.log().len(), log_len);
        assert_eq!(w.oracle.liveness_sweep(&mut w.ledger, &b, 20).unwrap(), vec![(1, true)]);
    }
}
