//! JSON-over-HTTP front end. Every mutation goes through the shared
//! [`Session`], so it produces the same ledger transactions as a scenario
//! replay. Requests are serialized by the session lock.
//!
//! The caller identifies itself with the hex public key in the
//! `x-llmchain-pubkey` header. Requests may carry an `at_time` (logical
//! minutes); without one the ledger's current time is used.

use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use llmchain_core::backends::BackendError;
use llmchain_core::ledger::{Address, EventKind, FeedbackPayload, LedgerError, Role};
use llmchain_core::oracle::OracleError;
use llmchain_core::scenario::{ScenarioError, Session};
use llmchain_core::store::{Cid, ModelDetails, StoreError};
use llmchain_core::ModelId;

pub const PUBKEY_HEADER: &str = "x-llmchain-pubkey";

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

fn ledger_status(e: &LedgerError) -> StatusCode {
    match e {
        LedgerError::Unauthorized { .. } => StatusCode::FORBIDDEN,
        LedgerError::NotFound(_) | LedgerError::BadReference(_) => StatusCode::NOT_FOUND,
        LedgerError::AlreadyRegistered(_) | LedgerError::Offline(_) => StatusCode::CONFLICT,
        LedgerError::Rejected(_) | LedgerError::InvalidInput(_) => StatusCode::BAD_REQUEST,
    }
}

fn store_status(e: &StoreError) -> StatusCode {
    match e {
        StoreError::NotFound(_) => StatusCode::NOT_FOUND,
        StoreError::InvalidInput(_) | StoreError::Decode { .. } => StatusCode::BAD_REQUEST,
        StoreError::Corrupt(_) | StoreError::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

fn backend_status(e: &BackendError) -> StatusCode {
    match e {
        BackendError::Unreachable(_) => StatusCode::SERVICE_UNAVAILABLE,
        BackendError::NoAnswer { .. } | BackendError::NotFound(_) => StatusCode::NOT_FOUND,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<ScenarioError> for ApiError {
    fn from(e: ScenarioError) -> Self {
        let status = match &e {
            ScenarioError::Invalid(_) | ScenarioError::Config { .. } => StatusCode::BAD_REQUEST,
            ScenarioError::Ledger(l) => ledger_status(l),
            ScenarioError::Store(s) => store_status(s),
            ScenarioError::Backend(b) => backend_status(b),
            ScenarioError::Oracle(o) => match o {
                OracleError::Ledger(l) => ledger_status(l),
                OracleError::Store(s) => store_status(s),
                OracleError::Backend(b) => backend_status(b),
                OracleError::UnknownModel(_) => StatusCode::NOT_FOUND,
                OracleError::TargetUnavailable(_) | OracleError::InsufficientReferences { .. } => {
                    StatusCode::CONFLICT
                }
                OracleError::InvalidConfig(_) | OracleError::Scorer(_) => StatusCode::INTERNAL_SERVER_ERROR,
            },
            ScenarioError::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl From<LedgerError> for ApiError {
    fn from(e: LedgerError) -> Self {
        Self::new(ledger_status(&e), e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        Self::new(store_status(&e), e.to_string())
    }
}

pub type SharedSession = Arc<Mutex<Session>>;

pub fn router(session: SharedSession) -> Router {
    Router::new()
        .route("/register", post(register))
        .route("/models", post(add_model).get(list_models))
        .route("/prompt", post(prompt))
        .route("/feedback", post(feedback))
        .route("/records/{cid}", get(record))
        .with_state(session)
}

fn lock(s: &SharedSession) -> std::sync::MutexGuard<'_, Session> {
    s.lock().unwrap_or_else(|p| p.into_inner())
}

fn sender(headers: &HeaderMap) -> Result<Address, ApiError> {
    let raw = headers
        .get(PUBKEY_HEADER)
        .ok_or_else(|| ApiError::bad_request(format!("missing {PUBKEY_HEADER} header")))?
        .to_str()
        .map_err(|_| ApiError::bad_request("public key header is not text"))?;
    let bytes = hex::decode(raw.trim()).map_err(|e| ApiError::bad_request(format!("public key is not hex: {e}")))?;
    Ok(Address::from_pubkey(&bytes))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegisterRequest {
    /// Hex-encoded public key.
    pub pubkey: String,
    pub role: Role,
    #[serde(default)]
    pub at_time: Option<u64>,
}

async fn register(State(s): State<SharedSession>, Json(req): Json<RegisterRequest>) -> Result<Json<Value>, ApiError> {
    let bytes = hex::decode(&req.pubkey).map_err(|e| ApiError::bad_request(format!("public key is not hex: {e}")))?;
    let mut session = lock(&s);
    let t = req.at_time.unwrap_or_else(|| session.now());
    let address = session.register(&bytes, req.role, t)?;
    Ok(Json(json!({ "address": address, "role": req.role })))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AddModelRequest {
    #[serde(default)]
    pub cid: Option<Cid>,
    /// Details to archive first; their CID is then registered.
    #[serde(default)]
    pub details: Option<ModelDetails>,
    #[serde(default)]
    pub context_tags: Vec<String>,
    #[serde(default)]
    pub at_time: Option<u64>,
}

async fn add_model(
    State(s): State<SharedSession>,
    headers: HeaderMap,
    Json(req): Json<AddModelRequest>,
) -> Result<Json<Value>, ApiError> {
    let from = sender(&headers)?;
    let mut session = lock(&s);
    let cid = match (req.cid, &req.details) {
        (Some(cid), None) => cid,
        (None, Some(details)) => {
            // check the role before archiving anything
            if session.ledger().state().role_of(&from) != Some(Role::Developer) {
                return Err(LedgerError::Unauthorized {
                    sender: from,
                    reason: "addModel requires role Developer".into(),
                }
                .into());
            }
            session.ledger().store().put(details)?
        }
        _ => return Err(ApiError::bad_request("give exactly one of cid or details")),
    };
    let t = req.at_time.unwrap_or_else(|| session.now());
    let model_id = session.add_model(from, cid, req.context_tags, t)?;
    Ok(Json(json!({ "model_id": model_id, "cid": cid })))
}

#[derive(Debug, Serialize)]
pub struct ModelView {
    pub model_id: ModelId,
    pub name: Option<String>,
    pub cid: Cid,
    pub r_auto: f64,
    pub r_human: f64,
    pub r_weighted: f64,
    pub auto_evals: u64,
    pub human_evals: u64,
    pub context_tags: Vec<String>,
}

/// Running models, best weighted reputation first.
async fn list_models(State(s): State<SharedSession>) -> Json<Vec<ModelView>> {
    let session = lock(&s);
    let store = session.ledger().store();
    let mut models: Vec<ModelView> = session
        .ledger()
        .state()
        .list_running()
        .into_iter()
        .map(|m| ModelView {
            model_id: m.model_id,
            name: store.get::<ModelDetails>(&m.cid).ok().map(|d| d.name),
            cid: m.cid,
            r_auto: m.reputation.r_auto,
            r_human: m.reputation.r_human,
            r_weighted: m.reputation.r_weighted,
            auto_evals: m.reputation.auto_eval_count,
            human_evals: m.reputation.human_eval_count,
            context_tags: m.context_tags.clone(),
        })
        .collect();
    models.sort_by(|a, b| b.r_weighted.total_cmp(&a.r_weighted).then(a.model_id.cmp(&b.model_id)));
    Json(models)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptRequest {
    pub model_id: ModelId,
    #[serde(default)]
    pub question_id: Option<String>,
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub at_time: Option<u64>,
}

fn require_model(session: &Session, id: ModelId) -> Result<(), ApiError> {
    if session.ledger().state().model(id).is_none() {
        return Err(ApiError::new(StatusCode::NOT_FOUND, format!("no model {id}")));
    }
    Ok(())
}

async fn prompt(
    State(s): State<SharedSession>,
    headers: HeaderMap,
    Json(req): Json<PromptRequest>,
) -> Result<Json<Value>, ApiError> {
    let from = sender(&headers)?;
    if req.question_id.is_some() == req.text.is_some() {
        return Err(ApiError::bad_request("give exactly one of question_id or text"));
    }
    let mut session = lock(&s);
    require_model(&session, req.model_id)?;
    let t = req.at_time.unwrap_or_else(|| session.now());
    let (answer, eval) = session.prompt(from, req.model_id, req.question_id.as_deref(), req.text.as_deref(), t)?;
    Ok(Json(json!({
        "model_id": req.model_id,
        "answer": answer,
        "record_cid": eval.record_cid,
        "s_a": eval.s_a,
        "w_a": eval.w_a,
    })))
}

/// Questionnaire answers on a 1..=5 scale.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constructs {
    pub a_trust: u8,
    pub a_complete: u8,
    pub a_utility: u8,
    pub familiarity: u8,
    pub llm_trust: u8,
    pub uncertainty: u8,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackRequest {
    pub model_id: ModelId,
    pub constructs: Constructs,
    pub record_cid: Cid,
    #[serde(default)]
    pub at_time: Option<u64>,
}

async fn feedback(
    State(s): State<SharedSession>,
    headers: HeaderMap,
    Json(req): Json<FeedbackRequest>,
) -> Result<Json<Value>, ApiError> {
    let from = sender(&headers)?;
    let c = req.constructs;
    let payload = FeedbackPayload::from_likert([
        c.a_trust,
        c.a_complete,
        c.a_utility,
        c.familiarity,
        c.llm_trust,
        c.uncertainty,
    ])?;
    let mut session = lock(&s);
    require_model(&session, req.model_id)?;
    let t = req.at_time.unwrap_or_else(|| session.now());
    let event = session.feedback(from, req.model_id, payload, req.record_cid, t)?;
    let EventKind::HumanEvaluated {
        duration_minutes,
        s_h,
        w_h,
        r_human_after,
        r_weighted_after,
        ..
    } = event.kind
    else {
        unreachable!("humEval emits HumanEvaluated");
    };
    Ok(Json(json!({
        "model_id": req.model_id,
        "duration_minutes": duration_minutes,
        "s_h": s_h,
        "w_h": w_h,
        "r_human": r_human_after,
        "r_weighted": r_weighted_after,
    })))
}

async fn record(State(s): State<SharedSession>, Path(cid): Path<String>) -> Result<Response, ApiError> {
    let cid: Cid = cid.parse()?;
    let bytes = lock(&s).ledger().store().get_bytes(&cid)?;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}
