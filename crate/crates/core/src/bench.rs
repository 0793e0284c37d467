//! Fixed-rate throughput/latency benchmark of the ledger contract calls.
//!
//! Each round submits one operation type at a constant send rate for a fixed
//! duration. Transactions are really applied to a fresh [`Ledger`], one block
//! per second of commit time. Timing comes from a deterministic single-server
//! FIFO queue whose per-operation service time is given by a [`CostModel`],
//! followed by a constant consensus delay:
//!
//! - throughput = successful transactions / (last commit − first submission)
//! - latency = commit time − submission time, averaged

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{Address, FeedbackPayload, Ledger, LedgerTransaction, Role, TxOp};
use crate::reputation::HyperParams;
use crate::store::{Cid, ModelDetails, OffchainStore};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("benchmark setup failed: {0}")]
    Setup(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BenchOp {
    #[serde(rename = "addModel")]
    AddModel,
    #[serde(rename = "autoEval")]
    AutoEval,
    #[serde(rename = "humEval")]
    HumEval,
}

impl BenchOp {
    pub const ALL: [BenchOp; 3] = [BenchOp::AutoEval, BenchOp::HumEval, BenchOp::AddModel];

    pub fn as_str(self) -> &'static str {
        match self {
            BenchOp::AddModel => "addModel",
            BenchOp::AutoEval => "autoEval",
            BenchOp::HumEval => "humEval",
        }
    }
}

impl fmt::Display for BenchOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BenchOp {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "addModel" | "add_model" => Ok(BenchOp::AddModel),
            "autoEval" | "auto_eval" => Ok(BenchOp::AutoEval),
            "humEval" | "hum_eval" => Ok(BenchOp::HumEval),
            other => Err(BenchError::InvalidInput(format!("unknown op {other:?}"))),
        }
    }
}

pub trait CostModel {
    /// Seconds of sequencer time one transaction of `op` occupies.
    fn service_time_s(&self, op: BenchOp) -> f64;
    /// Seconds between execution and finality.
    fn commit_latency_s(&self) -> f64;
}

/// Service time grows with the number of contract storage slots an operation
/// writes; finality grows with the validator count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StorageCostModel {
    pub base_ms: f64,
    pub per_write_ms: f64,
    pub validators: u32,
    pub per_validator_ms: f64,
}

impl Default for StorageCostModel {
    fn default() -> Self {
        Self {
            base_ms: 2.0,
            per_write_ms: 0.05,
            validators: 16,
            per_validator_ms: 10.0,
        }
    }
}

impl StorageCostModel {
    pub fn storage_writes(op: BenchOp) -> u32 {
        match op {
            // r_auto, auto_eval_count
            BenchOp::AutoEval => 2,
            // r_human, r_weighted, human_eval_count, last evaluation time
            BenchOp::HumEval => 4,
            // cid, owner, three scores, two counters, online flag, tags, next id
            BenchOp::AddModel => 10,
        }
    }
}

impl CostModel for StorageCostModel {
    fn service_time_s(&self, op: BenchOp) -> f64 {
        (self.base_ms + self.per_write_ms * f64::from(Self::storage_writes(op))) / 1000.0
    }

    fn commit_latency_s(&self) -> f64 {
        f64::from(self.validators) * self.per_validator_ms / 1000.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub rates: Vec<f64>,
    pub duration_s: f64,
    pub mix: Vec<BenchOp>,
    pub cost: StorageCostModel,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            rates: vec![50.0, 100.0, 200.0, 350.0, 500.0, 750.0, 1000.0],
            duration_s: 10.0,
            mix: BenchOp::ALL.to_vec(),
            cost: StorageCostModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub op: BenchOp,
    pub send_rate_tps: f64,
    pub throughput_tps: f64,
    pub avg_latency_s: f64,
    pub submitted: usize,
    pub succeeded: usize,
}

const SETUP_MODELS: usize = 8;
const SETUP_USERS: usize = 64;

struct Workload {
    ledger: Ledger,
    dev: Address,
    oracle: Address,
    users: Vec<Address>,
    models: Vec<u64>,
    record: Cid,
}

fn register(ledger: &mut Ledger, name: &str, role: Role) -> Result<Address, BenchError> {
    let addr = Address::from_pubkey(name.as_bytes());
    ledger
        .submit(
            addr,
            TxOp::Register {
                pubkey: hex::encode(name),
                role,
            },
            0,
        )
        .map_err(|e| BenchError::Setup(e.to_string()))?;
    Ok(addr)
}

fn setup() -> Result<Workload, BenchError> {
    let store = Arc::new(OffchainStore::in_memory());
    let mut ledger = Ledger::new(HyperParams::default(), store.clone());
    let admin = register(&mut ledger, "bench-admin", Role::Admin)?;
    let dev = register(&mut ledger, "bench-dev", Role::Developer)?;
    let oracle = register(&mut ledger, "bench-oracle", Role::User)?;
    ledger
        .submit(
            admin,
            TxOp::GrantRole {
                target: oracle,
                role: Role::Oracle,
            },
            0,
        )
        .map_err(|e| BenchError::Setup(e.to_string()))?;
    let users = (0..SETUP_USERS)
        .map(|i| register(&mut ledger, &format!("bench-user-{i}"), Role::User))
        .collect::<Result<Vec<_>, _>>()?;
    let mut models = Vec::new();
    for i in 0..SETUP_MODELS {
        let cid = store
            .put(&ModelDetails::named(&format!("bench-model-{i}")))
            .map_err(|e| BenchError::Setup(e.to_string()))?;
        ledger
            .submit(dev, TxOp::AddModel { cid, context_tags: vec![] }, 0)
            .map_err(|e| BenchError::Setup(e.to_string()))?;
        models.push(i as u64);
    }
    let record = Cid::of_bytes(b"bench-record");
    Ok(Workload {
        ledger,
        dev,
        oracle,
        users,
        models,
        record,
    })
}

fn make_tx(w: &mut Workload, op: BenchOp, i: usize, minute: u64) -> Result<LedgerTransaction, BenchError> {
    let (sender, op) = match op {
        BenchOp::AddModel => {
            let cid = w
                .ledger
                .store()
                .put(&ModelDetails::named(&format!("bench-new-model-{i}")))
                .map_err(|e| BenchError::Setup(e.to_string()))?;
            (
                w.dev,
                TxOp::AddModel {
                    cid,
                    context_tags: vec!["bench".into()],
                },
            )
        }
        BenchOp::AutoEval => (
            w.oracle,
            TxOp::AutoEval {
                model_id: w.models[i % w.models.len()],
                s_a: (i % 10) as f64 / 10.0,
                w_a: 0.5,
                record_cid: w.record,
            },
        ),
        BenchOp::HumEval => (
            w.users[i % w.users.len()],
            TxOp::HumEval {
                model_id: w.models[i % w.models.len()],
                feedback: FeedbackPayload {
                    a_trust: 0.75,
                    a_complete: 0.5,
                    a_utility: 0.75,
                    familiarity: 0.5,
                    llm_trust: 0.75,
                    uncertainty: 0.25,
                },
                s_a_last: 0.6,
                w_a_last: 0.5,
                record_cid: w.record,
            },
        ),
    };
    Ok(LedgerTransaction {
        nonce: 0,
        sender,
        logical_time: minute,
        op,
    })
}

/// One round: `op` at `rate` TPS for `duration_s` seconds.
pub fn run_round(op: BenchOp, rate: f64, duration_s: f64, cost: &dyn CostModel) -> Result<BenchRow, BenchError> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(BenchError::InvalidInput(format!("send rate {rate} must be positive")));
    }
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(BenchError::InvalidInput(format!(
            "duration {duration_s} s yields no measurement"
        )));
    }
    let n = (rate * duration_s).round() as usize;
    if n == 0 {
        return Err(BenchError::InvalidInput("no transactions would be sent".into()));
    }
    let mut w = setup()?;
    let service = cost.service_time_s(op);
    let commit_delay = cost.commit_latency_s();

    let mut free_at = 0.0_f64;
    let mut latency_sum = 0.0;
    let mut last_commit = 0.0_f64;
    let mut succeeded = 0;
    let mut block: Vec<LedgerTransaction> = Vec::new();
    let mut block_index = 0u64;
    let flush = |w: &mut Workload, block: &mut Vec<LedgerTransaction>| -> usize {
        if block.is_empty() {
            return 0;
        }
        w.ledger
            .apply_block(std::mem::take(block))
            .iter()
            .filter(|r| r.is_ok())
            .count()
    };
    for i in 0..n {
        let arrival = i as f64 / rate;
        let start = arrival.max(free_at);
        free_at = start + service;
        let commit = free_at + commit_delay;
        let this_block = free_at.floor() as u64;
        if this_block != block_index {
            succeeded += flush(&mut w, &mut block);
            block_index = this_block;
        }
        let mut tx = make_tx(&mut w, op, i, (arrival / 60.0) as u64)?;
        let pending = block.iter().filter(|t| t.sender == tx.sender).count() as u64;
        tx.nonce = w.ledger.next_nonce(&tx.sender) + pending;
        block.push(tx);
        latency_sum += commit - arrival;
        last_commit = last_commit.max(commit);
    }
    succeeded += flush(&mut w, &mut block);
    Ok(BenchRow {
        op,
        send_rate_tps: rate,
        throughput_tps: succeeded as f64 / last_commit,
        avg_latency_s: latency_sum / n as f64,
        submitted: n,
        succeeded,
    })
}

pub fn run_benchmark(cfg: &BenchConfig) -> Result<Vec<BenchRow>, BenchError> {
    if cfg.mix.is_empty() {
        return Err(BenchError::InvalidInput("empty workload".into()));
    }
    if cfg.rates.is_empty() {
        return Err(BenchError::InvalidInput("no send rates".into()));
    }
    let mut rows = Vec::new();
    for &op in &cfg.mix {
        for &rate in &cfg.rates {
            rows.push(run_round(op, rate, cfg.duration_s, &cfg.cost)?);
        }
    }
    Ok(rows)
}

pub const CSV_HEADER: &str = "op,send_rate_tps,throughput_tps,avg_latency_s";

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.3},{:.6}\n",
            r.op, r.send_rate_tps, r.throughput_tps, r.avg_latency_s
        ));
    }
    out
}
