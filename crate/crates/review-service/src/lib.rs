//! HTTP API over a [`ReviewBook`] and its audit log.
//!
//! | method | path                     | body                                   |
//! |--------|--------------------------|----------------------------------------|
//! | GET    | `/cases?offset=&limit=`  | page of case summaries                 |
//! | GET    | `/cases/{id}`            | [`CaseView`]                           |
//! | POST   | `/cases/{id}/overrides`  | [`OverrideDraft`] in, record out (201) |
//! | GET    | `/cases/{id}/decision`   | [`DecisionView`]                       |
//! | GET    | `/export/audit`          | every record, in log order             |
//!
//! Errors are `{"error": code, "message": text}`.

use std::future::Future;
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use criterion_lab::review::{
    AuditLog, CaseSummary, CaseView, DecisionView, OverrideDraft, OverrideRecord, ReviewBook, ReviewError,
};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

pub const DEFAULT_PAGE: usize = 50;
pub const MAX_PAGE: usize = 500;

/// Shared state: the book for reads, the log as the single writer.
pub struct ReviewState {
    book: RwLock<ReviewBook>,
    log: Mutex<AuditLog>,
}

impl ReviewState {
    /// Opens the audit log at `store` and replays it into `book`.
    pub fn open(mut book: ReviewBook, store: &Path) -> Result<ReviewState, ReviewError> {
        let log = AuditLog::open(store)?;
        book.apply_all(log.records())?;
        Ok(ReviewState {
            book: RwLock::new(book),
            log: Mutex::new(log),
        })
    }

    pub fn case_view(&self, case_id: &str) -> Result<CaseView, ReviewError> {
        self.book.read().expect("book lock").case_view(case_id)
    }

    pub fn decision(&self, case_id: &str) -> Result<DecisionView, ReviewError> {
        self.book.read().expect("book lock").decision(case_id)
    }

    /// Persists the override, then makes it visible to readers.
    pub fn record(&self, case_id: &str, draft: OverrideDraft) -> Result<OverrideRecord, ReviewError> {
        draft.validate()?;
        let mut log = self.log.lock().expect("log lock");
        self.book
            .read()
            .expect("book lock")
            .check_target(case_id, &draft.sentence_id)?;
        let record = log.append(case_id, draft)?;
        self.book.write().expect("book lock").apply(record.clone())?;
        Ok(record)
    }

    pub fn audit(&self) -> Vec<OverrideRecord> {
        self.log.lock().expect("log lock").records().to_vec()
    }
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: &'static str,
    message: String,
}

/// A JSON error response.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> ApiError {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            code: "bad_request",
            message: message.into(),
        }
    }
}

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> Self {
        let (status, code) = match &e {
            ReviewError::UnknownCase(_) => (StatusCode::NOT_FOUND, "not_found"),
            ReviewError::UnknownSentence { .. } => (StatusCode::CONFLICT, "unknown_sentence"),
            ReviewError::Invalid(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            ReviewError::Storage(_) | ReviewError::CorruptLog { .. } => {
                (StatusCode::INTERNAL_SERVER_ERROR, "storage_failure")
            }
            ReviewError::WrongMode(_) | ReviewError::Model(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError {
            status,
            code,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.code,
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

#[derive(Debug, Deserialize)]
struct PageQuery {
    offset: Option<usize>,
    limit: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CasePage {
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
    pub cases: Vec<CaseSummary>,
}

type Shared = Arc<ReviewState>;

async fn list_cases(
    State(state): State<Shared>,
    query: Result<Query<PageQuery>, axum::extract::rejection::QueryRejection>,
) -> Result<Json<CasePage>, ApiError> {
    let Query(query) = query.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let offset = query.offset.unwrap_or(0);
    let limit = query.limit.unwrap_or(DEFAULT_PAGE);
    if limit == 0 || limit > MAX_PAGE {
        return Err(ApiError::bad_request(format!("limit must be in 1..={MAX_PAGE}")));
    }
    let all = state.book.read().expect("book lock").summaries()?;
    Ok(Json(CasePage {
        total: all.len(),
        offset,
        limit,
        cases: all.into_iter().skip(offset).take(limit).collect(),
    }))
}

async fn get_case(State(state): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Json<CaseView>, ApiError> {
    Ok(Json(state.case_view(&id)?))
}

async fn get_decision(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<DecisionView>, ApiError> {
    Ok(Json(state.decision(&id)?))
}

async fn post_override(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<(StatusCode, Json<OverrideRecord>), ApiError> {
    let draft: OverrideDraft =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("invalid override body: {e}")))?;
    if !state.book.read().expect("book lock").contains_case(&id) {
        return Err(ReviewError::UnknownCase(id).into());
    }
    let record = state.record(&id, draft)?;
    Ok((StatusCode::CREATED, Json(record)))
}

async fn export_audit(State(state): State<Shared>) -> Json<Vec<OverrideRecord>> {
    Json(state.audit())
}

async fn not_found() -> ApiError {
    ApiError {
        status: StatusCode::NOT_FOUND,
        code: "not_found",
        message: "no such route".into(),
    }
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/cases", get(list_cases))
        .route("/cases/{id}", get(get_case))
        .route("/cases/{id}/overrides", post(post_override))
        .route("/cases/{id}/decision", get(get_decision))
        .route("/export/audit", get(export_audit))
        .fallback(not_found)
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    state: Shared,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}
