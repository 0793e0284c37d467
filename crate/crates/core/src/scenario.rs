//! Scenario replay: scripted users prompting models through the oracle and
//! leaving feedback on the ledger.
//!
//! A [`Session`] owns the ledger, oracle and backends and is the single path
//! through which prompts and feedback become transactions; the HTTP service
//! drives the same type.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{self, BackendError, BackendScript, BackendSet, DatasetFormat, InteractionTrace};
use crate::ledger::{encode_log, Address, Event, FeedbackPayload, Ledger, LedgerError, Role, TxOp};
use crate::oracle::{Evaluation, Interaction, Oracle, OracleConfig, OracleError};
use crate::reputation::HyperParams;
use crate::scorers::{lexical_score, LexicalScorer, Scorer};
use crate::store::{canonical_json, Cid, EvaluationRecord, ModelDetails, OffchainStore, StoreError};
use crate::ModelId;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {message}")]
    Config { path: String, message: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", content = "payload", rename_all = "snake_case")]
pub enum Action {
    Prompt {
        model: String,
        #[serde(default)]
        question_id: Option<String>,
        #[serde(default)]
        text: Option<String>,
    },
    /// Feedback on the user's latest prompt to `model`, as six 1..=5 answers
    /// in the order A_t, A_c, A_u, F, T, U.
    HumanFeedback { model: String, likert: [u8; 6] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledEvent {
    pub at_time: u64,
    pub user: String,
    #[serde(flatten)]
    pub action: Action,
}

/// Bulk replay: every trace is put to every model, each answer receiving one
/// automatic evaluation and one scripted human evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeedbackPolicy {
    /// Pool of simulated evaluators, drawn uniformly per answer.
    pub users: Vec<String>,
    /// Logical minutes between consecutive traces.
    pub interval_minutes: u64,
    /// Half-width of the uniform noise added to each answer construct.
    pub noise: f64,
    /// Number of dataset traces replayed; all when absent.
    pub traces: Option<usize>,
}

impl Default for FeedbackPolicy {
    fn default() -> Self {
        Self {
            users: (0..20).map(|i| format!("evaluator-{i:02}")).collect(),
            interval_minutes: 60,
            noise: 0.05,
            traces: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    pub dataset: PathBuf,
    #[serde(default)]
    pub hyperparams: HyperParams,
    #[serde(default)]
    pub oracle: OracleConfig,
    pub backends: Vec<BackendScript>,
    #[serde(default)]
    pub users: Vec<String>,
    #[serde(default)]
    pub schedule: Vec<ScheduledEvent>,
    #[serde(default)]
    pub feedback_policy: Option<FeedbackPolicy>,
}

impl Scenario {
    /// Reads a TOML scenario; a relative `dataset` is resolved against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = fs::read_to_string(path).map_err(|e| ScenarioError::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut scenario: Scenario = toml::from_str(&text).map_err(|e| ScenarioError::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        if scenario.dataset.is_relative() {
            if let Some(dir) = path.parent() {
                scenario.dataset = dir.join(&scenario.dataset);
            }
        }
        Ok(scenario)
    }

    pub fn load_traces(&self) -> Result<Vec<InteractionTrace>, ScenarioError> {
        Ok(backends::load_dataset(&self.dataset, DatasetFormat::from_path(&self.dataset))?)
    }

    /// Checks everything that can be checked without touching a ledger.
    pub fn validate(&self, traces: &[InteractionTrace]) -> Result<(), ScenarioError> {
        let invalid = |m: String| Err(ScenarioError::Invalid(m));
        self.hyperparams
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        self.oracle.validate()?;
        if self.backends.is_empty() {
            return invalid("no backends declared".into());
        }
        let models: BTreeSet<&str> = self.backends.iter().map(|b| b.model_name.as_str()).collect();
        let mut users = BTreeSet::new();
        for u in &self.users {
            if !users.insert(u.as_str()) {
                return invalid(format!("user {u:?} declared twice"));
            }
        }
        let question_ids: BTreeSet<&str> = traces.iter().map(|t| t.question_id.as_str()).collect();
        let mut prompted = BTreeSet::new();
        let mut prev = 0;
        for (i, ev) in self.schedule.iter().enumerate() {
            if ev.at_time < prev {
                return invalid(format!("schedule[{i}]: time {} goes backwards", ev.at_time));
            }
            prev = ev.at_time;
            if !users.contains(ev.user.as_str()) {
                return invalid(format!("schedule[{i}]: undeclared user {:?}", ev.user));
            }
            match &ev.action {
                Action::Prompt {
                    model,
                    question_id,
                    text,
                } => {
                    if !models.contains(model.as_str()) {
                        return invalid(format!("schedule[{i}]: undeclared model {model:?}"));
                    }
                    match (question_id, text) {
                        (Some(q), None) if !question_ids.contains(q.as_str()) => {
                            return invalid(format!("schedule[{i}]: unknown question {q:?}"));
                        }
                        (Some(_), None) | (None, Some(_)) => {}
                        _ => {
                            return invalid(format!(
                                "schedule[{i}]: a prompt needs exactly one of question_id or text"
                            ))
                        }
                    }
                    prompted.insert((ev.user.as_str(), model.as_str()));
                }
                Action::HumanFeedback { model, likert } => {
                    if !prompted.contains(&(ev.user.as_str(), model.as_str())) {
                        return invalid(format!(
                            "schedule[{i}]: feedback on {model:?} before {:?} prompted it",
                            ev.user
                        ));
                    }
                    FeedbackPayload::from_likert(*likert)
                        .map_err(|e| ScenarioError::Invalid(format!("schedule[{i}]: {e}")))?;
                }
            }
        }
        if let Some(p) = &self.feedback_policy {
            if p.users.is_empty() {
                return invalid("feedback_policy.users is empty".into());
            }
            if p.interval_minutes == 0 {
                return invalid("feedback_policy.interval_minutes must be positive".into());
            }
            if !(0.0..=1.0).contains(&p.noise) {
                return invalid(format!("feedback_policy.noise {} outside [0, 1]", p.noise));
            }
            if traces.iter().any(|t| t.ground_truth.is_none()) {
                return invalid("feedback_policy needs a ground truth for every trace".into());
            }
        }
        Ok(())
    }
}

/// Public key of a scenario user; its hash is the user's address.
pub fn user_pubkey(name: &str) -> Vec<u8> {
    format!("user:{name}").into_bytes()
}

/// Ledger, oracle and backends wired together, with the operator accounts
/// and one model per backend registered at time 0.
pub struct Session {
    ledger: Ledger,
    oracle: Oracle,
    backends: BackendSet,
    scorer: Box<dyn Scorer>,
    developer: Address,
    model_ids: BTreeMap<String, ModelId>,
    /// Latest evaluation record per (user, model).
    last_record: BTreeMap<(Address, ModelId), Cid>,
}

impl Session {
    pub fn new(
        hp: HyperParams,
        oracle_cfg: OracleConfig,
        backends: BackendSet,
        scorer: Box<dyn Scorer>,
    ) -> Result<Self, ScenarioError> {
        let store = Arc::new(OffchainStore::in_memory());
        let mut ledger = Ledger::new(hp, store.clone());
        let mut operator = |name: &str, role: Role| -> Result<Address, LedgerError> {
            let pubkey = format!("operator:{name}");
            let addr = Address::from_pubkey(pubkey.as_bytes());
            ledger.submit(
                addr,
                TxOp::Register {
                    pubkey: hex::encode(pubkey),
                    role,
                },
                0,
            )?;
            Ok(addr)
        };
        let admin = operator("admin", Role::Admin)?;
        let developer = operator("developer", Role::Developer)?;
        let oracle_addr = operator("oracle", Role::User)?;
        ledger.submit(
            admin,
            TxOp::GrantRole {
                target: oracle_addr,
                role: Role::Oracle,
            },
            0,
        )?;
        let names: Vec<String> = backends.model_names().map(str::to_string).collect();
        let mut session = Self {
            ledger,
            oracle: Oracle::new(oracle_addr, oracle_cfg),
            backends,
            scorer,
            developer,
            model_ids: BTreeMap::new(),
            last_record: BTreeMap::new(),
        };
        for name in names {
            let cid = store.put(&ModelDetails::named(&name))?;
            session.add_model(developer, cid, Vec::new(), 0)?;
        }
        Ok(session)
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn backends(&self) -> &BackendSet {
        &self.backends
    }

    pub fn developer(&self) -> Address {
        self.developer
    }

    pub fn model_id(&self, name: &str) -> Option<ModelId> {
        self.model_ids.get(name).copied()
    }

    /// Backend name of every registered model, by id.
    pub fn model_names(&self) -> BTreeMap<ModelId, String> {
        self.model_ids.iter().map(|(n, id)| (*id, n.clone())).collect()
    }

    pub fn now(&self) -> u64 {
        self.ledger.state().last_time
    }

    pub fn register(&mut self, pubkey: &[u8], role: Role, at_time: u64) -> Result<Address, LedgerError> {
        let addr = Address::from_pubkey(pubkey);
        self.ledger.submit(
            addr,
            TxOp::Register {
                pubkey: hex::encode(pubkey),
                role,
            },
            at_time,
        )?;
        Ok(addr)
    }

    pub fn add_model(
        &mut self,
        sender: Address,
        cid: Cid,
        context_tags: Vec<String>,
        at_time: u64,
    ) -> Result<ModelId, ScenarioError> {
        let event = self
            .ledger
            .submit(sender, TxOp::AddModel { cid, context_tags }, at_time)?;
        let crate::ledger::EventKind::ModelAdded { model_id, .. } = event.kind else {
            unreachable!("addModel emits ModelAdded");
        };
        if let Ok(details) = self.ledger.store().get::<ModelDetails>(&cid) {
            self.model_ids.entry(details.name).or_insert(model_id);
        }
        Ok(model_id)
    }

    /// Asks `model_id` a dataset question or free text and has the oracle
    /// evaluate the answer.
    pub fn prompt(
        &mut self,
        user: Address,
        model_id: ModelId,
        question_id: Option<&str>,
        text: Option<&str>,
        at_time: u64,
    ) -> Result<(String, Evaluation), ScenarioError> {
        match self.ledger.state().role_of(&user) {
            Some(Role::User) => {}
            _ => {
                return Err(LedgerError::Unauthorized {
                    sender: user,
                    reason: "only users may prompt models".into(),
                }
                .into())
            }
        }
        let store = self.ledger.store().clone();
        let name = self
            .oracle
            .model_name(self.ledger.state(), &store, model_id)?;
        let (question_id, prompt, context, answer) = match (question_id, text) {
            (Some(q), _) => {
                let trace = self
                    .backends
                    .trace(q)
                    .ok_or_else(|| ScenarioError::Invalid(format!("unknown question {q:?}")))?;
                let answer = self.backends.query(&name, q, at_time)?;
                (Some(q.to_string()), trace.question.clone(), trace.context.clone(), answer)
            }
            (None, Some(t)) => {
                let answer = self.backends.query_text(&name, t, at_time)?;
                let trace = self.backends.trace_by_text(t);
                (
                    trace.map(|tr| tr.question_id.clone()),
                    t.to_string(),
                    trace.map_or_else(|| "general".to_string(), |tr| tr.context.clone()),
                    answer,
                )
            }
            (None, None) => {
                return Err(ScenarioError::Invalid("prompt needs a question_id or text".into()))
            }
        };
        let ix = Interaction {
            user,
            target_model: model_id,
            context,
            question_id,
            prompt,
            answer: answer.clone(),
            logical_time: at_time,
        };
        let eval = self
            .oracle
            .evaluate_interaction(&ix, &mut self.ledger, &self.backends, self.scorer.as_ref())?;
        self.last_record.insert((user, model_id), eval.record_cid);
        Ok((answer, eval))
    }

    /// Latest evaluation record the user obtained from `model_id`.
    pub fn last_record(&self, user: Address, model_id: ModelId) -> Option<Cid> {
        self.last_record.get(&(user, model_id)).copied()
    }

    /// Human evaluation of the answer archived under `record_cid`; the
    /// automatic score and weight are taken from that record.
    pub fn feedback(
        &mut self,
        user: Address,
        model_id: ModelId,
        feedback: FeedbackPayload,
        record_cid: Cid,
        at_time: u64,
    ) -> Result<Event, ScenarioError> {
        let record: EvaluationRecord = self.ledger.store().get(&record_cid)?;
        if record.target_model != model_id {
            return Err(ScenarioError::Invalid(format!(
                "record {record_cid} evaluates model {}, not {model_id}",
                record.target_model
            )));
        }
        Ok(self.ledger.submit(
            user,
            TxOp::HumEval {
                model_id,
                feedback,
                s_a_last: record.s_a,
                w_a_last: record.w_a,
                record_cid,
            },
            at_time,
        )?)
    }

    pub fn liveness_sweep(&mut self, at_time: u64) -> Result<(), ScenarioError> {
        self.oracle
            .liveness_sweep(&mut self.ledger, &self.backends, at_time)?;
        Ok(())
    }

    pub fn into_ledger(self) -> Ledger {
        self.ledger
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub model: String,
    pub step: usize,
    pub r_auto: f64,
    pub r_human: f64,
    pub r_weighted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeaderboardRow {
    pub rank: usize,
    pub model_id: ModelId,
    pub model: String,
    pub r_weighted: f64,
    pub r_auto: f64,
    pub r_human: f64,
    pub auto_evals: u64,
    pub human_evals: u64,
    pub online: bool,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub trajectories: Vec<TrajectoryRow>,
    pub leaderboard: Vec<LeaderboardRow>,
    pub record_cids: Vec<Cid>,
    /// Interactions dropped because a model or its references were
    /// unavailable.
    pub skipped: usize,
    pub ledger: Ledger,
}

impl RunReport {
    pub fn events(&self) -> &[Event] {
        self.ledger.events()
    }

    pub fn trajectories_csv(&self) -> String {
        let mut out = String::from("model,step,r_auto,r_human,r_weighted\n");
        for r in &self.trajectories {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.model, r.step, r.r_auto, r.r_human, r.r_weighted
            ));
        }
        out
    }

    pub fn leaderboard_csv(&self) -> String {
        let mut out = String::from(
            "rank,model_id,model,r_weighted,r_auto,r_human,auto_evals,human_evals,online\n",
        );
        for r in &self.leaderboard {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.rank,
                r.model_id,
                r.model,
                r.r_weighted,
                r.r_auto,
                r.r_human,
                r.auto_evals,
                r.human_evals,
                r.online
            ));
        }
        out
    }

    /// Writes trajectories, leaderboard, the event log, the transaction log
    /// and every archived record into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), ScenarioError> {
        let io = |path: PathBuf| move |source| ScenarioError::Io { path, source };
        let records = dir.join("records");
        fs::create_dir_all(&records).map_err(io(records.clone()))?;
        let write = |name: &str, body: &[u8]| {
            let path = dir.join(name);
            fs::write(&path, body).map_err(io(path))
        };
        write("trajectories.csv", self.trajectories_csv().as_bytes())?;
        write("leaderboard.csv", self.leaderboard_csv().as_bytes())?;
        let mut events = String::new();
        for e in self.events() {
            events.push_str(std::str::from_utf8(&canonical_json(e)?).expect("utf-8"));
            events.push('\n');
        }
        write("events.jsonl", events.as_bytes())?;
        write("ledger.log", encode_log(self.ledger.log()).as_bytes())?;
        for cid in &self.record_cids {
            let path = records.join(format!("{cid}.json"));
            fs::write(&path, self.ledger.store().get_bytes(cid)?).map_err(io(path))?;
        }
        Ok(())
    }
}

fn snapshot(session: &Session, step: usize, out: &mut Vec<TrajectoryRow>) {
    let names = session.model_names();
    for m in session.ledger().state().models.values() {
        out.push(TrajectoryRow {
            model: names.get(&m.model_id).cloned().unwrap_or_else(|| m.model_id.to_string()),
            step,
            r_auto: m.reputation.r_auto,
            r_human: m.reputation.r_human,
            r_weighted: m.reputation.r_weighted,
        });
    }
}

/// Final standings by weighted reputation, ties by model id.
pub fn leaderboard(ledger: &Ledger, names: &BTreeMap<ModelId, String>) -> Vec<LeaderboardRow> {
    let mut models: Vec<_> = ledger.state().models.values().collect();
    models.sort_by(|a, b| {
        b.reputation
            .r_weighted
            .total_cmp(&a.reputation.r_weighted)
            .then(a.model_id.cmp(&b.model_id))
    });
    models
        .into_iter()
        .enumerate()
        .map(|(i, m)| LeaderboardRow {
            rank: i + 1,
            model_id: m.model_id,
            model: names.get(&m.model_id).cloned().unwrap_or_default(),
            r_weighted: m.reputation.r_weighted,
            r_auto: m.reputation.r_auto,
            r_human: m.reputation.r_human,
            auto_evals: m.reputation.auto_eval_count,
            human_evals: m.reputation.human_eval_count,
            online: m.online,
        })
        .collect()
}

/// Whether a failed interaction is an availability problem (skipped) rather
/// than a bug in the scenario.
fn is_unavailable(e: &ScenarioError) -> bool {
    matches!(
        e,
        ScenarioError::Backend(BackendError::Unreachable(_) | BackendError::NoAnswer { .. })
            | ScenarioError::Oracle(
                OracleError::TargetUnavailable(_) | OracleError::InsufficientReferences { .. }
            )
            | ScenarioError::Ledger(LedgerError::Offline(_))
    )
}

fn scripted_feedback(rng: &mut ChaCha8Rng, quality: f64, noise: f64, traits: [f64; 3]) -> FeedbackPayload {
    let mut construct = || {
        let jitter = if noise > 0.0 { rng.gen_range(-noise..=noise) } else { 0.0 };
        (quality + jitter).clamp(0.0, 1.0)
    };
    FeedbackPayload {
        a_trust: construct(),
        a_complete: construct(),
        a_utility: construct(),
        familiarity: traits[0],
        llm_trust: traits[1],
        uncertainty: traits[2],
    }
}

/// Replays the schedule, then the feedback policy, and reports reputations
/// after every step. Step 0 is the state right after model registration.
pub fn run_scenario(scenario: &Scenario) -> Result<RunReport, ScenarioError> {
    let traces = scenario.load_traces()?;
    run_scenario_with(scenario, traces)
}

/// Validates the scenario and builds a session with its declared users
/// registered at time 0, in declaration order.
pub fn start_session(
    scenario: &Scenario,
    traces: Vec<InteractionTrace>,
) -> Result<(Session, BTreeMap<String, Address>), ScenarioError> {
    scenario.validate(&traces)?;
    let backend_set = BackendSet::new(traces, scenario.backends.clone())?;
    let mut session = Session::new(
        scenario.hyperparams,
        scenario.oracle,
        backend_set,
        Box::new(LexicalScorer),
    )?;
    let mut users = BTreeMap::new();
    for u in &scenario.users {
        let addr = session.register(&user_pubkey(u), Role::User, 0)?;
        users.insert(u.clone(), addr);
    }
    Ok((session, users))
}

pub fn run_scenario_with(scenario: &Scenario, traces: Vec<InteractionTrace>) -> Result<RunReport, ScenarioError> {
    let (mut session, mut users) = start_session(scenario, traces)?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut declare = |session: &mut Session, name: &str, at: u64| -> Result<Address, ScenarioError> {
        if let Some(a) = users.get(name) {
            return Ok(*a);
        }
        let addr = session.register(&user_pubkey(name), Role::User, at)?;
        users.insert(name.to_string(), addr);
        Ok(addr)
    };

    let mut trajectories = Vec::new();
    let mut record_cids = Vec::new();
    let mut skipped = 0;
    let mut step = 0;
    snapshot(&session, step, &mut trajectories);
    let has_windows = scenario.backends.iter().any(|b| !b.offline.is_empty());

    for ev in &scenario.schedule {
        let user = declare(&mut session, &ev.user, ev.at_time)?;
        if has_windows {
            session.liveness_sweep(ev.at_time)?;
        }
        let outcome = match &ev.action {
            Action::Prompt {
                model,
                question_id,
                text,
            } => {
                let id = session.model_id(model).expect("validated");
                session
                    .prompt(user, id, question_id.as_deref(), text.as_deref(), ev.at_time)
                    .map(|(_, e)| record_cids.push(e.record_cid))
            }
            Action::HumanFeedback { model, likert } => {
                let id = session.model_id(model).expect("validated");
                let payload = FeedbackPayload::from_likert(*likert).expect("validated");
                match session.last_record(user, id) {
                    Some(cid) => session.feedback(user, id, payload, cid, ev.at_time).map(|_| ()),
                    // the prompt it refers to was skipped
                    None => {
                        skipped += 1;
                        Ok(())
                    }
                }
            }
        };
        match outcome {
            Ok(()) => {}
            Err(e) if is_unavailable(&e) => skipped += 1,
            Err(e) => return Err(e),
        }
        step += 1;
        snapshot(&session, step, &mut trajectories);
    }

    if let Some(policy) = &scenario.feedback_policy {
        let start = scenario.schedule.last().map_or(0, |e| e.at_time);
        let mut pool = Vec::with_capacity(policy.users.len());
        for name in &policy.users {
            let addr = declare(&mut session, name, start)?;
            // familiarity, trust in LLMs, uncertainty
            let traits = [rng.gen_range(0.5..=1.0), rng.gen_range(0.5..=1.0), rng.gen_range(0.0..=0.5)];
            pool.push((addr, traits));
        }
        let models: Vec<(String, ModelId)> = session.model_ids.iter().map(|(n, id)| (n.clone(), *id)).collect();
        let n = policy.traces.unwrap_or(usize::MAX).min(session.backends().traces().len());
        for i in 0..n {
            let t = start + (i as u64 + 1) * policy.interval_minutes;
            if has_windows {
                session.liveness_sweep(t)?;
            }
            let trace = session.backends().traces()[i].clone();
            let truth = trace.ground_truth.as_deref().expect("validated");
            for (name, id) in &models {
                let (user, traits) = pool[rng.gen_range(0..pool.len())];
                let outcome = session
                    .prompt(user, *id, Some(&trace.question_id), None, t)
                    .and_then(|(answer, eval)| {
                        record_cids.push(eval.record_cid);
                        let quality = lexical_score(&answer, truth);
                        let fb = scripted_feedback(&mut rng, quality, policy.noise, traits);
                        session.feedback(user, *id, fb, eval.record_cid, t)
                    });
                match outcome {
                    Ok(_) => {}
                    Err(e) if is_unavailable(&e) => skipped += 1,
                    Err(e) => {
                        return Err(ScenarioError::Invalid(format!(
                            "trace {} on {name}: {e}",
                            trace.question_id
                        )))
                    }
                }
            }
            step += 1;
            snapshot(&session, step, &mut trajectories);
        }
    }

    let names = session.model_names();
    let ledger = session.into_ledger();
    Ok(RunReport {
        leaderboard: leaderboard(&ledger, &names),
        trajectories,
        record_cids,
        skipped,
        ledger,
    })
}
