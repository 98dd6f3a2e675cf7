//! HTTP backend for blinded review: sessions, per-reviewer queues, verdict
//! intake, progress and export. Reviewers never see which approach produced
//! a candidate.

mod error;
mod state;

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use leitsatz_core::evalframe::{ClassVerdict, EvalError, CLASS_COUNT};
use serde::{Deserialize, Serialize};

pub use error::{ApiError, ErrorBody};
pub use state::{item_id, AppState, ReviewData, ReviewText, ServiceConfig, ServiceError};

use state::SubmitOutcome;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionRequest {
    pub token: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionResponse {
    pub session: String,
    pub reviewer: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Position {
    /// 1-based place of this item in the reviewer's queue.
    pub index: usize,
    pub total: usize,
}

/// One summary as shown to a reviewer. Carries no approach or model
/// information.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewItem {
    pub item_id: String,
    pub gold_text: String,
    pub candidate_text: String,
    pub judgment_excerpt: Option<String>,
    pub position: Position,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueDone {
    pub done: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictPayload {
    pub item_id: String,
    pub decisions: Vec<bool>,
    #[serde(default)]
    pub reasoning: String,
    #[serde(default)]
    pub comment: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub item_id: String,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub done: usize,
    pub remaining: usize,
}

type Shared = Arc<AppState>;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/session", post(open_session))
        .route("/queue/next", get(next_item))
        .route("/verdicts", post(submit_verdict))
        .route("/progress", get(progress))
        .route("/admin/export", get(export))
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, state: Shared) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
        .map(str::trim)
}

fn reviewer(state: &AppState, headers: &HeaderMap) -> Result<String, ApiError> {
    let session = bearer(headers).ok_or_else(|| ApiError::unauthorized("missing bearer session"))?;
    state
        .sessions
        .read()
        .expect("session lock")
        .get(session)
        .cloned()
        .ok_or_else(|| ApiError::unauthorized("unknown session"))
}

fn parse<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::validation(e.to_string()))
}

async fn open_session(State(state): State<Shared>, body: Bytes) -> Result<Json<SessionResponse>, ApiError> {
    let req: SessionRequest = parse(&body)?;
    let reviewer = state
        .reviewer_for_token(&req.token)
        .ok_or_else(|| ApiError::unauthorized("unknown token"))?
        .to_string();
    let session = hex::encode(rand::random::<[u8; 16]>());
    state
        .sessions
        .write()
        .expect("session lock")
        .insert(session.clone(), reviewer.clone());
    Ok(Json(SessionResponse { session, reviewer }))
}

async fn next_item(State(state): State<Shared>, headers: HeaderMap) -> Result<Response, ApiError> {
    let reviewer = reviewer(&state, &headers)?;
    let store = state.snapshot();
    let Some(queue) = state.queues.get(&reviewer) else {
        return Ok(Json(QueueDone { done: true }).into_response());
    };
    let next = queue
        .items
        .iter()
        .enumerate()
        .find(|(_, id)| !store.contains(&reviewer, &state.items[*id]));
    let Some((pos, id)) = next else {
        return Ok(Json(QueueDone { done: true }).into_response());
    };
    let texts = &state.texts[&state.items[id]];
    let item = ReviewItem {
        item_id: id.clone(),
        gold_text: texts.gold_text.clone(),
        candidate_text: texts.candidate_text.clone(),
        judgment_excerpt: if state.config.show_excerpt {
            texts.judgment_excerpt.clone()
        } else {
            None
        },
        position: Position {
            index: pos + 1,
            total: queue.items.len(),
        },
    };
    Ok(Json(item).into_response())
}

async fn submit_verdict(
    State(state): State<Shared>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<(StatusCode, Json<Ack>), ApiError> {
    let reviewer = reviewer(&state, &headers)?;
    let payload: VerdictPayload = parse(&body)?;
    let decisions: [bool; CLASS_COUNT] = payload
        .decisions
        .as_slice()
        .try_into()
        .map_err(|_| ApiError::validation(format!("expected {CLASS_COUNT} decisions, got {}", payload.decisions.len())))?;
    let assigned = state
        .queues
        .get(&reviewer)
        .is_some_and(|q| q.items.contains(&payload.item_id));
    if !assigned {
        return Err(ApiError::not_assigned());
    }
    let summary = state.items[&payload.item_id].clone();
    let verdict = ClassVerdict {
        reviewer,
        judgment_id: summary.judgment_id,
        approach: summary.approach,
        decisions,
        reasoning: payload.reasoning,
        comment: payload.comment.filter(|c| !c.trim().is_empty()),
        ts: chrono::Utc::now(),
    };
    match state.submit(verdict).await {
        Ok(SubmitOutcome::Accepted) => Ok((
            StatusCode::CREATED,
            Json(Ack {
                item_id: payload.item_id,
                accepted: true,
            }),
        )),
        Ok(SubmitOutcome::Duplicate) => Err(ApiError::duplicate()),
        Ok(SubmitOutcome::Invalid(EvalError::MissingReasoning)) => {
            Err(ApiError::validation("class 7 requires a written reasoning"))
        }
        Ok(SubmitOutcome::Invalid(e)) => Err(ApiError::bad_request(e.to_string())),
        Err(e) => Err(ApiError::internal(format!("could not persist verdict: {e}"))),
    }
}

async fn progress(State(state): State<Shared>, headers: HeaderMap) -> Result<Json<Progress>, ApiError> {
    let reviewer = reviewer(&state, &headers)?;
    let store = state.snapshot();
    let total = state.queues.get(&reviewer).map_or(0, |q| q.items.len());
    let done = state.queues.get(&reviewer).map_or(0, |q| {
        q.items
            .iter()
            .filter(|id| store.contains(&reviewer, &state.items[*id]))
            .count()
    });
    Ok(Json(Progress {
        done,
        remaining: total - done,
    }))
}

async fn export(State(state): State<Shared>, headers: HeaderMap) -> Result<Response, ApiError> {
    match bearer(&headers) {
        Some(token) if state.is_admin(token) => {}
        _ => return Err(ApiError::forbidden("admin credential required")),
    }
    let body = state.snapshot().to_jsonl();
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}
