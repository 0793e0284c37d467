//! Deterministic permissioned-ledger simulation.
//!
//! One state machine hosts the identity, access-control and reputation
//! contract surfaces. Transactions are applied strictly in order by a single
//! sequencer; a failed transaction leaves state untouched and is recorded as
//! a `Failed` event. The state root is a SHA-256 digest over a sorted,
//! length-prefixed binary encoding of accounts, nonces, models and
//! evaluation clocks. The event log is kept beside the state and is not part
//! of the root.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::reputation::{self, HumanFeedback, HyperParams, ReputationTuple};
use crate::store::{canonical_json, Cid, OffchainStore};
use crate::ModelId;

/// Initial reputation of the first model on an empty ledger.
pub const BOOTSTRAP_REPUTATION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LedgerError {
    #[error("public key already registered as {0}")]
    AlreadyRegistered(Address),
    #[error("{sender} is not authorized: {reason}")]
    Unauthorized { sender: Address, reason: String },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("model {0} is offline")]
    Offline(ModelId),
    #[error("content {0} does not resolve in the off-chain store")]
    BadReference(Cid),
    #[error("transaction rejected: {0}")]
    Rejected(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Account identifier: SHA-256 of the account's public key.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Address(pub [u8; 32]);

impl Address {
    pub fn from_pubkey(pubkey: &[u8]) -> Self {
        Address(Sha256::digest(pubkey).into())
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({})", &hex::encode(self.0)[..12])
    }
}

impl FromStr for Address {
    type Err = LedgerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = hex::decode(s)
            .map_err(|e| LedgerError::InvalidInput(format!("bad address {s:?}: {e}")))?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| LedgerError::InvalidInput(format!("address {s:?} is not 32 bytes")))?;
        Ok(Address(arr))
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&hex::encode(self.0))
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Developer,
    Oracle,
    Admin,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::User, Role::Developer, Role::Oracle, Role::Admin];

    fn code(self) -> u8 {
        match self {
            Role::User => 0,
            Role::Developer => 1,
            Role::Oracle => 2,
            Role::Admin => 3,
        }
    }
}

impl FromStr for Role {
    type Err = LedgerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "user" => Ok(Role::User),
            "developer" => Ok(Role::Developer),
            "oracle" => Ok(Role::Oracle),
            "admin" => Ok(Role::Admin),
            other => Err(LedgerError::InvalidInput(format!("unknown role {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Account {
    pub address: Address,
    pub role: Role,
    pub registered_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub model_id: ModelId,
    pub cid: Cid,
    pub owner: Address,
    pub reputation: ReputationTuple,
    pub online: bool,
    pub context_tags: Vec<String>,
}

/// Answer and user constructs of one questionnaire, each in [0, 1]. The
/// elapsed time is filled in by the ledger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackPayload {
    pub a_trust: f64,
    pub a_complete: f64,
    pub a_utility: f64,
    pub familiarity: f64,
    pub llm_trust: f64,
    pub uncertainty: f64,
}

impl FeedbackPayload {
    pub fn with_duration(&self, duration_minutes: f64) -> HumanFeedback {
        HumanFeedback {
            a_trust: self.a_trust,
            a_complete: self.a_complete,
            a_utility: self.a_utility,
            familiarity: self.familiarity,
            llm_trust: self.llm_trust,
            uncertainty: self.uncertainty,
            duration_minutes,
        }
    }

    /// Maps 1..=5 Likert answers, in field order, onto [0, 1].
    pub fn from_likert(values: [u8; 6]) -> Result<Self, LedgerError> {
        let mut unit = [0.0; 6];
        for (u, v) in unit.iter_mut().zip(values) {
            *u = reputation::likert_to_unit(v).map_err(|e| LedgerError::InvalidInput(e.to_string()))?;
        }
        Ok(Self {
            a_trust: unit[0],
            a_complete: unit[1],
            a_utility: unit[2],
            familiarity: unit[3],
            llm_trust: unit[4],
            uncertainty: unit[5],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", content = "payload")]
pub enum TxOp {
    Register {
        /// Hex-encoded public key.
        pubkey: String,
        role: Role,
    },
    GrantRole {
        target: Address,
        role: Role,
    },
    AddModel {
        cid: Cid,
        context_tags: Vec<String>,
    },
    AutoEval {
        model_id: ModelId,
        s_a: f64,
        w_a: f64,
        record_cid: Cid,
    },
    /// Human evaluation; also applies the weighted-reputation update for the
    /// same interaction.
    HumEval {
        model_id: ModelId,
        feedback: FeedbackPayload,
        s_a_last: f64,
        w_a_last: f64,
        record_cid: Cid,
    },
    SetLiveness {
        model_id: ModelId,
        online: bool,
    },
}

impl TxOp {
    pub fn name(&self) -> &'static str {
        match self {
            TxOp::Register { .. } => "register",
            TxOp::GrantRole { .. } => "grantRole",
            TxOp::AddModel { .. } => "addModel",
            TxOp::AutoEval { .. } => "autoEval",
            TxOp::HumEval { .. } => "humEval",
            TxOp::SetLiveness { .. } => "setLiveness",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerTransaction {
    pub nonce: u64,
    pub sender: Address,
    /// Minutes since genesis.
    pub logical_time: u64,
    #[serde(flatten)]
    pub op: TxOp,
}

impl LedgerTransaction {
    pub fn hash(&self) -> Cid {
        Cid::of_bytes(&canonical_json(self).expect("transactions serialize"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum EventKind {
    Registered {
        address: Address,
        role: Role,
    },
    RoleGranted {
        target: Address,
        role: Role,
    },
    ModelAdded {
        model_id: ModelId,
        cid: Cid,
        owner: Address,
        initial: ReputationTuple,
    },
    AutoEvaluated {
        model_id: ModelId,
        record_cid: Cid,
        s_a: f64,
        w_a: f64,
        threshold: f64,
        r_auto_before: f64,
        r_auto_after: f64,
    },
    HumanEvaluated {
        model_id: ModelId,
        record_cid: Cid,
        user: Address,
        feedback: FeedbackPayload,
        duration_minutes: f64,
        s_h: f64,
        w_h: f64,
        s_a_last: f64,
        w_a_last: f64,
        s_theta: f64,
        w_theta: f64,
        threshold_human: f64,
        threshold_weighted: f64,
        r_human_before: f64,
        r_human_after: f64,
        r_weighted_before: f64,
        r_weighted_after: f64,
    },
    LivenessChanged {
        model_id: ModelId,
        online: bool,
    },
    Failed {
        op: String,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub logical_time: u64,
    pub sender: Address,
    pub nonce: u64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LedgerState {
    pub accounts: BTreeMap<Address, Account>,
    pub models: BTreeMap<ModelId, ModelRecord>,
    pub last_human_eval: BTreeMap<Address, u64>,
    /// Last accepted nonce per sender.
    pub nonces: BTreeMap<Address, u64>,
    pub next_model_id: ModelId,
    pub last_time: u64,
    pub event_log: Vec<Event>,
    pub state_root: [u8; 32],
}

struct RootWriter(Sha256);

impl RootWriter {
    fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.0.update(b);
    }
    fn u64(&mut self, v: u64) {
        self.0.update(v.to_be_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }
    fn u8(&mut self, v: u8) {
        self.0.update([v]);
    }
}

impl LedgerState {
    pub fn genesis() -> Self {
        let mut s = Self::default();
        s.state_root = s.compute_root();
        s
    }

    pub fn compute_root(&self) -> [u8; 32] {
        let mut w = RootWriter(Sha256::new());
        w.bytes(b"accounts");
        w.u64(self.accounts.len() as u64);
        for (addr, acct) in &self.accounts {
            w.bytes(&addr.0);
            w.u8(acct.role.code());
            w.u64(acct.registered_at);
        }
        w.bytes(b"nonces");
        w.u64(self.nonces.len() as u64);
        for (addr, n) in &self.nonces {
            w.bytes(&addr.0);
            w.u64(*n);
        }
        w.bytes(b"models");
        w.u64(self.models.len() as u64);
        for (id, m) in &self.models {
            w.u64(*id);
            w.bytes(&m.cid.0);
            w.bytes(&m.owner.0);
            let r = &m.reputation;
            w.f64(r.r_auto);
            w.f64(r.r_human);
            w.f64(r.r_weighted);
            w.u64(r.auto_eval_count);
            w.u64(r.human_eval_count);
            w.u8(m.online as u8);
            w.u64(m.context_tags.len() as u64);
            for tag in &m.context_tags {
                w.bytes(tag.as_bytes());
            }
        }
        w.bytes(b"last_human_eval");
        w.u64(self.last_human_eval.len() as u64);
        for (addr, t) in &self.last_human_eval {
            w.bytes(&addr.0);
            w.u64(*t);
        }
        w.bytes(b"clock");
        w.u64(self.next_model_id);
        w.u64(self.last_time);
        w.0.finalize().into()
    }

    pub fn root_hex(&self) -> String {
        hex::encode(self.state_root)
    }

    pub fn verify_root(&self) -> bool {
        self.compute_root() == self.state_root
    }

    pub fn role_of(&self, addr: &Address) -> Option<Role> {
        self.accounts.get(addr).map(|a| a.role)
    }

    pub fn model(&self, id: ModelId) -> Option<&ModelRecord> {
        self.models.get(&id)
    }

    /// Online models, in id order.
    pub fn list_running(&self) -> Vec<&ModelRecord> {
        self.models.values().filter(|m| m.online).collect()
    }

    fn mean_of(&self, f: impl Fn(&ReputationTuple) -> f64) -> Option<f64> {
        if self.models.is_empty() {
            return None;
        }
        let sum: f64 = self.models.values().map(|m| f(&m.reputation)).sum();
        Some(sum / self.models.len() as f64)
    }

    /// Per-type means over every registered model; used both as the trust
    /// thresholds and as the bootstrap reputation of a new model.
    pub fn mean_reputation(&self) -> Option<ReputationTuple> {
        Some(ReputationTuple::new(
            self.mean_of(|r| r.r_auto)?,
            self.mean_of(|r| r.r_human)?,
            self.mean_of(|r| r.r_weighted)?,
        ))
    }

    fn require_role(&self, sender: &Address, role: Role, action: &str) -> Result<(), LedgerError> {
        match self.role_of(sender) {
            Some(r) if r == role => Ok(()),
            Some(r) => Err(LedgerError::Unauthorized {
                sender: *sender,
                reason: format!("{action} requires role {role:?}, sender holds {r:?}"),
            }),
            None => Err(LedgerError::Unauthorized {
                sender: *sender,
                reason: format!("{action} requires role {role:?}, sender is not registered"),
            }),
        }
    }

    fn model_mut(&mut self, id: ModelId) -> Result<&mut ModelRecord, LedgerError> {
        self.models
            .get_mut(&id)
            .ok_or_else(|| LedgerError::NotFound(format!("model {id}")))
    }

    fn online_model(&self, id: ModelId) -> Result<&ModelRecord, LedgerError> {
        let m = self
            .models
            .get(&id)
            .ok_or_else(|| LedgerError::NotFound(format!("model {id}")))?;
        if !m.online {
            return Err(LedgerError::Offline(id));
        }
        Ok(m)
    }

    /// Checks and executes one transaction without touching the root or the
    /// event log. On error nothing has been mutated.
    fn execute(
        &mut self,
        tx: &LedgerTransaction,
        hp: &HyperParams,
        store: &OffchainStore,
    ) -> Result<EventKind, LedgerError> {
        if let Some(&last) = self.nonces.get(&tx.sender) {
            if tx.nonce <= last {
                return Err(LedgerError::Rejected(format!(
                    "stale nonce {} (last accepted {last})",
                    tx.nonce
                )));
            }
        }
        if tx.logical_time < self.last_time {
            return Err(LedgerError::Rejected(format!(
                "logical time {} precedes {}",
                tx.logical_time, self.last_time
            )));
        }
        let now = tx.logical_time;
        let kind = match &tx.op {
            TxOp::Register { pubkey, role } => {
                let key = hex::decode(pubkey)
                    .map_err(|e| LedgerError::InvalidInput(format!("pubkey is not hex: {e}")))?;
                let address = Address::from_pubkey(&key);
                if address != tx.sender {
                    return Err(LedgerError::Unauthorized {
                        sender: tx.sender,
                        reason: "sender does not match the registered public key".into(),
                    });
                }
                if self.accounts.contains_key(&address) {
                    return Err(LedgerError::AlreadyRegistered(address));
                }
                // the first account on an empty ledger may claim Admin
                let allowed = matches!(role, Role::User | Role::Developer)
                    || (*role == Role::Admin && self.accounts.is_empty());
                if !allowed {
                    return Err(LedgerError::Unauthorized {
                        sender: tx.sender,
                        reason: format!("role {role:?} can only be granted by an admin"),
                    });
                }
                self.accounts.insert(
                    address,
                    Account {
                        address,
                        role: *role,
                        registered_at: now,
                    },
                );
                EventKind::Registered {
                    address,
                    role: *role,
                }
            }
            TxOp::GrantRole { target, role } => {
                self.require_role(&tx.sender, Role::Admin, "grantRole")?;
                let acct = self
                    .accounts
                    .get_mut(target)
                    .ok_or_else(|| LedgerError::NotFound(format!("account {target}")))?;
                acct.role = *role;
                EventKind::RoleGranted {
                    target: *target,
                    role: *role,
                }
            }
            TxOp::AddModel { cid, context_tags } => {
                self.require_role(&tx.sender, Role::Developer, "addModel")?;
                if !store.contains(cid) {
                    return Err(LedgerError::BadReference(*cid));
                }
                let initial = self
                    .mean_reputation()
                    .unwrap_or_else(|| ReputationTuple::uniform(BOOTSTRAP_REPUTATION));
                let model_id = self.next_model_id;
                self.next_model_id += 1;
                self.models.insert(
                    model_id,
                    ModelRecord {
                        model_id,
                        cid: *cid,
                        owner: tx.sender,
                        reputation: initial,
                        online: true,
                        context_tags: context_tags.clone(),
                    },
                );
                EventKind::ModelAdded {
                    model_id,
                    cid: *cid,
                    owner: tx.sender,
                    initial,
                }
            }
            TxOp::AutoEval {
                model_id,
                s_a,
                w_a,
                record_cid,
            } => {
                self.require_role(&tx.sender, Role::Oracle, "autoEval")?;
                check_unit("s_a", *s_a)?;
                check_unit("w_a", *w_a)?;
                let before = self.online_model(*model_id)?.reputation.r_auto;
                let threshold = self.mean_of(|r| r.r_auto).expect("model exists");
                let after = reputation::update_reputation(before, *s_a, *w_a, threshold, hp);
                let m = self.model_mut(*model_id)?;
                m.reputation.r_auto = after;
                m.reputation.auto_eval_count += 1;
                EventKind::AutoEvaluated {
                    model_id: *model_id,
                    record_cid: *record_cid,
                    s_a: *s_a,
                    w_a: *w_a,
                    threshold,
                    r_auto_before: before,
                    r_auto_after: after,
                }
            }
            TxOp::HumEval {
                model_id,
                feedback,
                s_a_last,
                w_a_last,
                record_cid,
            } => {
                self.require_role(&tx.sender, Role::User, "humEval")?;
                check_unit("s_a_last", *s_a_last)?;
                check_unit("w_a_last", *w_a_last)?;
                let current = self.online_model(*model_id)?.reputation;
                let elapsed = match self.last_human_eval.get(&tx.sender) {
                    Some(&prev) => (now - prev) as f64,
                    None => hp.d_reset_minutes,
                };
                let duration = reputation::effective_duration(elapsed, hp);
                let fb = feedback.with_duration(duration);
                fb.validate()
                    .map_err(|e| LedgerError::InvalidInput(e.to_string()))?;
                let s_h = reputation::human_score(&fb, hp);
                let w_h = reputation::human_weight(&fb, hp)
                    .map_err(|e| LedgerError::InvalidInput(e.to_string()))?;
                let threshold_human = self.mean_of(|r| r.r_human).expect("model exists");
                let threshold_weighted = self.mean_of(|r| r.r_weighted).expect("model exists");
                let r_human =
                    reputation::update_reputation(current.r_human, s_h, w_h, threshold_human, hp);
                let (s_theta, mut w_theta) =
                    reputation::combine_theta(s_h, *s_a_last, w_h, *w_a_last, hp);
                // a zero-weight human evaluation counts as no human evaluation
                if w_h == 0.0 {
                    w_theta = 0.0;
                }
                let r_weighted = reputation::update_reputation(
                    current.r_weighted,
                    s_theta,
                    w_theta,
                    threshold_weighted,
                    hp,
                );
                let m = self.model_mut(*model_id)?;
                m.reputation.r_human = r_human;
                m.reputation.r_weighted = r_weighted;
                m.reputation.human_eval_count += 1;
                self.last_human_eval.insert(tx.sender, now);
                EventKind::HumanEvaluated {
                    model_id: *model_id,
                    record_cid: *record_cid,
                    user: tx.sender,
                    feedback: *feedback,
                    duration_minutes: duration,
                    s_h,
                    w_h,
                    s_a_last: *s_a_last,
                    w_a_last: *w_a_last,
                    s_theta,
                    w_theta,
                    threshold_human,
                    threshold_weighted,
                    r_human_before: current.r_human,
                    r_human_after: r_human,
                    r_weighted_before: current.r_weighted,
                    r_weighted_after: r_weighted,
                }
            }
            TxOp::SetLiveness { model_id, online } => {
                self.require_role(&tx.sender, Role::Oracle, "setLiveness")?;
                self.model_mut(*model_id)?.online = *online;
                EventKind::LivenessChanged {
                    model_id: *model_id,
                    online: *online,
                }
            }
        };
        self.nonces.insert(tx.sender, tx.nonce);
        self.last_time = now;
        Ok(kind)
    }

    /// Applies one transaction and appends its event (or a `Failed` event).
    /// The root is only recomputed when `commit` is set.
    fn apply_inner(
        &mut self,
        tx: &LedgerTransaction,
        hp: &HyperParams,
        store: &OffchainStore,
        commit: bool,
    ) -> Result<Event, LedgerError> {
        let result = self.execute(tx, hp, store);
        let kind = match &result {
            Ok(kind) => kind.clone(),
            Err(e) => EventKind::Failed {
                op: tx.op.name().to_string(),
                reason: e.to_string(),
            },
        };
        let event = Event {
            seq: self.event_log.len() as u64,
            logical_time: tx.logical_time,
            sender: tx.sender,
            nonce: tx.nonce,
            kind,
        };
        self.event_log.push(event.clone());
        if commit && result.is_ok() {
            self.state_root = self.compute_root();
        }
        result.map(|_| event)
    }

    pub fn apply(
        &mut self,
        tx: &LedgerTransaction,
        hp: &HyperParams,
        store: &OffchainStore,
    ) -> Result<Event, LedgerError> {
        self.apply_inner(tx, hp, store, true)
    }
}

/// Functional form of [`LedgerState::apply`].
pub fn apply(
    tx: &LedgerTransaction,
    state: &LedgerState,
    hp: &HyperParams,
    store: &OffchainStore,
) -> LedgerState {
    let mut next = state.clone();
    let _ = next.apply(tx, hp, store);
    next
}

fn check_unit(name: &str, v: f64) -> Result<(), LedgerError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(LedgerError::InvalidInput(format!("{name} = {v} is outside [0, 1]")))
    }
}

/// Total order used when several submitters hand over a batch at once.
pub fn sequence(batch: &mut [LedgerTransaction]) {
    batch.sort_by(|a, b| {
        (a.logical_time, a.sender, a.nonce).cmp(&(b.logical_time, b.sender, b.nonce))
    });
}

/// The ledger: state, contract constants, off-chain store and the ordered
/// transaction log. Callers that share it across threads wrap it in a mutex;
/// that lock is the submission queue.
#[derive(Debug, Clone)]
pub struct Ledger {
    state: LedgerState,
    hp: HyperParams,
    store: Arc<OffchainStore>,
    log: Vec<LedgerTransaction>,
}

impl Ledger {
    pub fn new(hp: HyperParams, store: Arc<OffchainStore>) -> Self {
        Self {
            state: LedgerState::genesis(),
            hp,
            store,
            log: Vec::new(),
        }
    }

    pub fn state(&self) -> &LedgerState {
        &self.state
    }

    pub fn hyperparams(&self) -> &HyperParams {
        &self.hp
    }

    pub fn store(&self) -> &Arc<OffchainStore> {
        &self.store
    }

    pub fn log(&self) -> &[LedgerTransaction] {
        &self.log
    }

    pub fn events(&self) -> &[Event] {
        &self.state.event_log
    }

    pub fn next_nonce(&self, sender: &Address) -> u64 {
        self.state.nonces.get(sender).map_or(0, |n| n + 1)
    }

    /// Builds a transaction with the sender's next nonce and applies it.
    pub fn submit(&mut self, sender: Address, op: TxOp, logical_time: u64) -> Result<Event, LedgerError> {
        let tx = LedgerTransaction {
            nonce: self.next_nonce(&sender),
            sender,
            logical_time,
            op,
        };
        self.apply(tx)
    }

    pub fn apply(&mut self, tx: LedgerTransaction) -> Result<Event, LedgerError> {
        let out = self.state.apply(&tx, &self.hp, &self.store);
        self.log.push(tx);
        out
    }

    /// Applies a batch in order and recomputes the root once at the end.
    pub fn apply_block(&mut self, txs: Vec<LedgerTransaction>) -> Vec<Result<Event, LedgerError>> {
        let mut out = Vec::with_capacity(txs.len());
        for tx in txs {
            out.push(self.state.apply_inner(&tx, &self.hp, &self.store, false));
            self.log.push(tx);
        }
        self.state.state_root = self.state.compute_root();
        out
    }

    /// Rebuilds a ledger from genesis by re-applying `log` in order.
    pub fn replay(hp: HyperParams, store: Arc<OffchainStore>, log: &[LedgerTransaction]) -> Self {
        let mut ledger = Self::new(hp, store);
        for tx in log {
            let _ = ledger.apply(tx.clone());
        }
        ledger
    }

    /// One canonical-JSON transaction per line.
    pub fn write_log(&self, path: &Path) -> std::io::Result<()> {
        fs::write(path, encode_log(&self.log))
    }

    pub fn read_log(path: &Path) -> Result<Vec<LedgerTransaction>, LedgerError> {
        let text = fs::read_to_string(path)
            .map_err(|e| LedgerError::InvalidInput(format!("{}: {e}", path.display())))?;
        decode_log(&text)
    }
}

pub fn encode_log(log: &[LedgerTransaction]) -> String {
    let mut out = String::new();
    for tx in log {
        out.push_str(std::str::from_utf8(&canonical_json(tx).expect("transactions serialize")).unwrap());
        out.push('\n');
    }
    out
}

pub fn decode_log(text: &str) -> Result<Vec<LedgerTransaction>, LedgerError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| LedgerError::InvalidInput(format!("log line {}: {e}", i + 1)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::ModelDetails;

    struct Fixture {
        ledger: Ledger,
        admin: Address,
        dev: Address,
        oracle: Address,
        user: Address,
    }

    fn pubkey(name: &str) -> String {
        hex::encode(name.as_bytes())
    }

    fn register(ledger: &mut Ledger, name: &str, role: Role) -> Result<Address, LedgerError> {
        let addr = Address::from_pubkey(name.as_bytes());
        ledger.submit(
            addr,
            TxOp::Register {
                pubkey: pubkey(name),
                role,
            },
            0,
        )?;
        Ok(addr)
    }

    fn add_model(ledger: &mut Ledger, dev: Address, name: &str) -> Result<ModelId, LedgerError> {
        let cid = ledger.store().put(&ModelDetails::named(name)).unwrap();
        let ev = ledger.submit(
            dev,
            TxOp::AddModel {
                cid,
                context_tags: vec!["general".into()],
            },
            0,
        )?;
        match ev.kind {
            EventKind::ModelAdded { model_id, .. } => Ok(model_id),
            other => panic!("{other:?}"),
        }
    }

    fn fixture() -> Fixture {
        let mut ledger = Ledger::new(HyperParams::default(), Arc::new(OffchainStore::in_memory()));
        let admin = register(&mut ledger, "admin", Role::Admin).unwrap();
        let dev = register(&mut ledger, "dev", Role::Developer).unwrap();
        let oracle = register(&mut ledger, "oracle", Role::User).unwrap();
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
        let user = register(&mut ledger, "user", Role::User).unwrap();
        Fixture {
            ledger,
            admin,
            dev,
            oracle,
            user,
        }
    }

    fn auto_eval(ledger: &mut Ledger, oracle: Address, model_id: ModelId, s_a: f64, w_a: f64, t: u64) -> Result<Event, LedgerError> {
        ledger.submit(
            oracle,
            TxOp::AutoEval {
                model_id,
                s_a,
                w_a,
                record_cid: Cid([1; 32]),
            },
            t,
        )
    }

    fn perfect() -> FeedbackPayload {
        FeedbackPayload {
            a_trust: 1.0,
            a_complete: 1.0,
            a_utility: 1.0,
            familiarity: 1.0,
            llm_trust: 1.0,
            uncertainty: 0.0,
        }
    }

    #[test]
    fn register_derives_address_from_pubkey() {
        let f = fixture();
        let expected: Address = "aa0c950bc72217b7391c83a760f59a54fa178891f057c61ea375a84497eb8fd9"
            .parse()
            .unwrap();
        // sha256("developer-key-1") computed with an external tool
        assert_eq!(Address::from_pubkey(b"developer-key-1"), expected);
        assert_eq!(f.ledger.state().role_of(&f.user), Some(Role::User));
        assert_eq!(f.ledger.state().role_of(&f.dev), Some(Role::Developer));
    }

    #[test]
    fn duplicate_registration_rejected() {
        let mut f = fixture();
        let root = f.ledger.state().state_root;
        assert!(matches!(
            register(&mut f.ledger, "user", Role::User),
            Err(LedgerError::AlreadyRegistered(_))
        ));
        assert_eq!(f.ledger.state().state_root, root);
        assert!(matches!(
            f.ledger.events().last().unwrap().kind,
            EventKind::Failed { .. }
        ));
    }

    #[test]
    fn only_first_account_may_self_register_admin() {
        let mut f = fixture();
        assert!(matches!(
            register(&mut f.ledger, "mallory", Role::Admin),
            Err(LedgerError::Unauthorized { .. })
        ));
        assert!(matches!(
            register(&mut f.ledger, "mallory", Role::Oracle),
            Err(LedgerError::Unauthorized { .. })
        ));
    }

    #[test]
    fn grant_role_checks() {
        let mut f = fixture();
        assert_eq!(f.ledger.state().role_of(&f.oracle), Some(Role::Oracle));
        let r = f.ledger.submit(
            f.user,
            TxOp::GrantRole {
                target: f.user,
                role: Role::Admin,
            },
            0,
        );
        assert!(matches!(r, Err(LedgerError::Unauthorized { .. })));
        let r = f.ledger.submit(
            f.admin,
            TxOp::GrantRole {
                target: Address([9; 32]),
                role: Role::Oracle,
            },
            0,
        );
        assert!(matches!(r, Err(LedgerError::NotFound(_))));
    }

    #[test]
    fn add_model_bootstrap_and_means() {
        let mut f = fixture();
        let m0 = add_model(&mut f.ledger, f.dev, "m0").unwrap();
        assert_eq!(
            f.ledger.state().model(m0).unwrap().reputation,
            ReputationTuple::uniform(0.5)
        );
        let m1 = add_model(&mut f.ledger, f.dev, "m1").unwrap();
        {
            let state = &mut f.ledger.state;
            state.models.get_mut(&m0).unwrap().reputation.r_weighted = 0.4;
            state.models.get_mut(&m1).unwrap().reputation.r_weighted = 0.8;
        }
        let m2 = add_model(&mut f.ledger, f.dev, "m2").unwrap();
        assert!((f.ledger.state().model(m2).unwrap().reputation.r_weighted - 0.6).abs() < 1e-12);
    }

    #[test]
    fn add_model_requires_developer_and_resolvable_cid() {
        let mut f = fixture();
        assert!(matches!(
            add_model(&mut f.ledger, f.user, "x"),
            Err(LedgerError::Unauthorized { .. })
        ));
        let r = f.ledger.submit(
            f.dev,
            TxOp::AddModel {
                cid: Cid([3; 32]),
                context_tags: vec![],
            },
            0,
        );
        assert!(matches!(r, Err(LedgerError::BadReference(_))));
    }

    #[test]
    fn auto_eval_reward_branch() {
        let mut f = fixture();
        let m0 = add_model(&mut f.ledger, f.dev, "m0").unwrap();
        add_model(&mut f.ledger, f.dev, "m1").unwrap();
        let ev = auto_eval(&mut f.ledger, f.oracle, m0, 0.8, 1.0, 1).unwrap();
        let r = f.ledger.state().model(m0).unwrap().reputation;
        assert!((r.r_auto - 0.6).abs() < 1e-12);
        assert_eq!(r.auto_eval_count, 1);
        assert!(matches!(ev.kind, EventKind::AutoEvaluated { record_cid, .. } if record_cid == Cid([1; 32])));
    }

    #[test]
    fn auto_eval_fixpoint_and_access() {
        let mut f = fixture();
        let m0 = add_model(&mut f.ledger, f.dev, "m0").unwrap();
        auto_eval(&mut f.ledger, f.oracle, m0, 0.5, 0.9, 1).unwrap();
        assert_eq!(f.ledger.state().model(m0).unwrap().reputation.r_auto, 0.5);
        assert!(matches!(
            auto_eval(&mut f.ledger, f.user, m0, 0.9, 1.0, 1),
            Err(LedgerError::Unauthorized { .. })
        ));
        assert!(matches!(
            auto_eval(&mut f.ledger, f.oracle, 42, 0.9, 1.0, 1),
            Err(LedgerError::NotFound(_))
        ));
        assert!(matches!(
            auto_eval(&mut f.ledger, f.oracle, m0, 1.5, 1.0, 1),
            Err(LedgerError::InvalidInput(_))
        ));
    }

    #[test]
    fn hum_eval_perfect_feedback_at_cap() {
        let mut f = fixture();
        let m0 = add_model(&mut f.ledger, f.dev, "m0").unwrap();
        add_model(&mut f.ledger, f.dev, "m1").unwrap();
        f.ledger
            .submit(
                f.user,
                TxOp::HumEval {
                    model_id: m0,
                    feedback: perfect(),
                    s_a_last: 1.0,
                    w_a_last: 1.0,
                    record_cid: Cid([2; 32]),
                },
                5,
            )
            .unwrap();
        let r = f.ledger.state().model(m0).unwrap().reputation;
        // chained by hand: F_D(1440) = 0.616909..., r_h = 0.5 + 0.5·F_D/3
        assert!((r.r_human - 0.602818217146).abs() < 1e-9);
        let w_theta = 2.0 / 3.0 * 0.616909302877065 + 1.0 / 3.0;
        assert!((r.r_weighted - (0.5 + 0.5 * w_theta / 3.0)).abs() < 1e-9);
        assert_eq!(r.human_eval_count, 1);
        assert_eq!(f.ledger.state().last_human_eval[&f.user], 5);
    }

    #[test]
    fn hum_eval_same_minute_has_no_effect() {
        let mut f = fixture();
        let m0 = add_model(&mut f.ledger, f.dev, "m0").unwrap();
        let eval = |ledger: &mut Ledger| {
            ledger.submit(
                f.user,
                TxOp::HumEval {
                    model_id: m0,
                    feedback: perfect(),
                    s_a_last: 1.0,
                    w_a_last: 0.9,
                    record_cid: Cid([2; 32]),
                },
                30,
            )
        };
        eval(&mut f.ledger).unwrap();
        let before = f.ledger.state().model(m0).unwrap().reputation;
        eval(&mut f.ledger).unwrap();
        let after = f.ledger.state().model(m0).unwrap().reputation;
        assert_eq!(before.r_human, after.r_human);
        assert_eq!(before.r_weighted, after.r_weighted);
    }

    #[test]
    fn hum_eval_unknown_model_and_wrong_role() {
        let mut f = fixture();
        let op = TxOp::HumEval {
            model_id: 99,
            feedback: perfect(),
            s_a_last: 1.0,
            w_a_last: 1.0,
            record_cid: Cid([2; 32]),
        };
        assert!(matches!(f.ledger.submit(f.user, op.clone(), 1), Err(LedgerError::NotFound(_))));
        assert!(matches!(
            f.ledger.submit(f.dev, op, 1),
            Err(LedgerError::Unauthorized { .. })
        ));
    }

    #[test]
    fn liveness_toggles_running_list() {
        let mut f = fixture();
        let m0 = add_model(&mut f.ledger, f.dev, "m0").unwrap();
        let set = |ledger: &mut Ledger, who, online| {
            ledger.submit(who, TxOp::SetLiveness { model_id: m0, online }, 2)
        };
        set(&mut f.ledger, f.oracle, false).unwrap();
        assert!(f.ledger.state().list_running().is_empty());
        assert!(matches!(
            auto_eval(&mut f.ledger, f.oracle, m0, 0.9, 1.0, 2),
            Err(LedgerError::Offline(_))
        ));
        set(&mut f.ledger, f.oracle, true).unwrap();
        assert_eq!(f.ledger.state().list_running().len(), 1);
        assert!(matches!(
            set(&mut f.ledger, f.dev, false),
            Err(LedgerError::Unauthorized { .. })
        ));
    }

    #[test]
    fn stale_nonce_and_time_regression_rejected() {
        let mut f = fixture();
        let m0 = add_model(&mut f.ledger, f.dev, "m0").unwrap();
        auto_eval(&mut f.ledger, f.oracle, m0, 0.9, 1.0, 10).unwrap();
        let root = f.ledger.state().state_root;
        let stale = LedgerTransaction {
            nonce: 0,
            sender: f.oracle,
            logical_time: 10,
            op: TxOp::SetLiveness {
                model_id: m0,
                online: false,
            },
        };
        assert!(matches!(f.ledger.apply(stale), Err(LedgerError::Rejected(_))));
        assert_eq!(f.ledger.state().state_root, root);
        assert!(matches!(
            auto_eval(&mut f.ledger, f.oracle, m0, 0.9, 1.0, 9),
            Err(LedgerError::Rejected(_))
        ));
        assert_eq!(f.ledger.state().state_root, root);
    }

    #[test]
    fn genesis_plus_register() {
        let mut ledger = Ledger::new(HyperParams::default(), Arc::new(OffchainStore::in_memory()));
        register(&mut ledger, "solo", Role::User).unwrap();
        assert_eq!(ledger.state().accounts.len(), 1);
        assert!(ledger.state().verify_root());
    }

    #[test]
    fn replay_reproduces_root_and_log_round_trips() {
        let mut f = fixture();
        let m0 = add_model(&mut f.ledger, f.dev, "m0").unwrap();
        let m1 = add_model(&mut f.ledger, f.dev, "m1").unwrap();
        for t in 1..40u64 {
            let m = if t % 2 == 0 { m0 } else { m1 };
            let _ = auto_eval(&mut f.ledger, f.oracle, m, (t % 7) as f64 / 7.0, 0.7, t);
        }
        let _ = auto_eval(&mut f.ledger, f.user, m0, 0.1, 1.0, 50);
        let text = encode_log(f.ledger.log());
        let decoded = decode_log(&text).unwrap();
        assert_eq!(decoded, f.ledger.log());
        let a = Ledger::replay(HyperParams::default(), f.ledger.store().clone(), &decoded);
        let b = Ledger::replay(HyperParams::default(), f.ledger.store().clone(), &decoded);
        assert_eq!(a.state().state_root, f.ledger.state().state_root);
        assert_eq!(b.state().state_root, a.state().state_root);
        assert_eq!(a.events(), f.ledger.events());
    }

    #[test]
    fn block_application_matches_single_steps() {
        let f = fixture();
        let log = f.ledger.log().to_vec();
        let mut blocked = Ledger::new(HyperParams::default(), f.ledger.store().clone());
        blocked.apply_block(log);
        assert_eq!(blocked.state().state_root, f.ledger.state().state_root);
    }

    #[test]
    fn sequencer_orders_by_time_sender_nonce() {
        let a = Address([1; 32]);
        let b = Address([2; 32]);
        let tx = |sender, nonce, t| LedgerTransaction {
            nonce,
            sender,
            logical_time: t,
            op: TxOp::SetLiveness {
                model_id: 0,
                online: true,
            },
        };
        let mut batch = vec![tx(b, 0, 5), tx(a, 1, 5), tx(a, 0, 5), tx(b, 1, 1)];
        sequence(&mut batch);
        let order: Vec<_> = batch.iter().map(|t| (t.logical_time, t.sender, t.nonce)).collect();
        assert_eq!(order, vec![(1, b, 1), (5, a, 0), (5, a, 1), (5, b, 0)]);
    }

    #[test]
    fn transaction_wire_format() {
        let tx = LedgerTransaction {
            nonce: 3,
            sender: Address([0; 32]),
            logical_time: 12,
            op: TxOp::SetLiveness {
                model_id: 4,
                online: false,
            },
        };
        let json = String::from_utf8(canonical_json(&tx).unwrap()).unwrap();
        assert_eq!(
            json,
            format!(
                r#"{{"logical_time":12,"nonce":3,"op":"SetLiveness","payload":{{"model_id":4,"online":false}},"sender":"{}"}}"#,
                "0".repeat(64)
            )
        );
    }
}
