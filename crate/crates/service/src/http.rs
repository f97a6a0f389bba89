//! JSON-over-HTTP front end for [`Service`].
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | POST | `/users` | `{user_id, demographic?}` | 201 user record |
//! | GET | `/users/{id}` | | user record |
//! | POST | `/users/{id}/sessions?domain=` | | 201 new, 200 existing session |
//! | GET | `/sessions/{sid}/next` | | next query |
//! | POST | `/sessions/{sid}/answers` | `{query_id, label}` | progress and next query |
//! | GET | `/sessions/{sid}/progress` | | progress |
//! | GET | `/sessions/{sid}/ranking` | | buckets, best first |
//! | POST | `/users/{id}/train/{reward\|agent}` | `{domain?, beta?, steps?}` | 202 job |
//! | GET | `/jobs/{id}` | | job |
//! | GET | `/users/{id}/ui?domain=&technique=&state=` | | `{action, next_config}` |
//! | POST | `/users/{id}/questionnaires/{period}` | `{kind, items, reverse_coded?}` | scores |
//! | GET | `/export/results.csv` | | CSV |
//! | GET | `/corpus?domain=` | | clips |
//! | GET | `/clips/{id}` | | clip |
//!
//! Failures reply with `{"code": ..., "message": ...}`.

use std::collections::HashMap;

use aui_core::study::Technique;
use aui_core::ui::{Domain, UiConfig};
use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::ApiError;
use crate::service::{Answer, CreateUser, JobKind, QuestionnairePayload, Service, TrainRequest};

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(service: Service) -> Router {
    Router::new()
        .route("/users", post(create_user))
        .route("/users/{id}", get(get_user))
        .route("/users/{id}/sessions", post(start_session))
        .route("/users/{id}/train/{kind}", post(train))
        .route("/users/{id}/ui", get(adapted_ui))
        .route("/users/{id}/questionnaires/{period}", post(questionnaire))
        .route("/sessions/{sid}/next", get(next_query))
        .route("/sessions/{sid}/answers", post(answer))
        .route("/sessions/{sid}/progress", get(progress))
        .route("/sessions/{sid}/ranking", get(ranking))
        .route("/jobs/{id}", get(job))
        .route("/export/results.csv", get(export))
        .route("/corpus", get(corpus))
        .route("/clips/{id}", get(clip))
        .fallback(|| async { ApiError::new(crate::error::ErrorKind::NotFound, "no_route", "no such endpoint") })
        .with_state(service)
}

/// Parses a JSON body; an empty body reads as `{}` when `empty_ok`.
fn body<T: DeserializeOwned>(bytes: &Bytes, empty_ok: bool) -> ApiResult<T> {
    let bytes: &[u8] = if empty_ok && bytes.iter().all(u8::is_ascii_whitespace) { b"{}" } else { bytes };
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

fn param<'a>(q: &'a HashMap<String, String>, key: &str) -> ApiResult<&'a str> {
    q.get(key)
        .map(String::as_str)
        .ok_or_else(|| ApiError::bad_request(format!("missing query parameter '{key}'")))
}

fn parse_domain(s: &str) -> ApiResult<Domain> {
    s.parse().map_err(|e: aui_core::ui::UiError| ApiError::bad_request(e.to_string()))
}

fn parse_technique(s: &str) -> ApiResult<Technique> {
    match s.to_ascii_lowercase().as_str() {
        "adaptive" => Ok(Technique::Adaptive),
        "na" => Ok(Technique::NA),
        _ => Err(ApiError::bad_request(format!("unknown technique '{s}' (adaptive or NA)"))),
    }
}

fn created<T: Serialize>(v: T) -> Response {
    (StatusCode::CREATED, Json(v)).into_response()
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker panicked: {e}")))?
}

async fn create_user(State(s): State<Service>, bytes: Bytes) -> ApiResult<Response> {
    let req: CreateUser = body(&bytes, false)?;
    Ok(created(blocking(move || s.create_user(req)).await?))
}

async fn get_user(State(s): State<Service>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(s.user(&id)?).into_response())
}

async fn start_session(
    State(s): State<Service>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let domain = parse_domain(param(&q, "domain")?)?;
    let (info, new) = blocking(move || s.start_session(&id, domain)).await?;
    Ok(if new { created(info) } else { Json(info).into_response() })
}

async fn next_query(State(s): State<Service>, Path(sid): Path<String>) -> ApiResult<Response> {
    Ok(Json(blocking(move || s.next_query(&sid)).await?).into_response())
}

async fn answer(State(s): State<Service>, Path(sid): Path<String>, bytes: Bytes) -> ApiResult<Response> {
    let a: Answer = body(&bytes, false)?;
    Ok(Json(blocking(move || s.answer(&sid, &a)).await?).into_response())
}

async fn progress(State(s): State<Service>, Path(sid): Path<String>) -> ApiResult<Response> {
    Ok(Json(blocking(move || s.progress(&sid)).await?).into_response())
}

async fn ranking(State(s): State<Service>, Path(sid): Path<String>) -> ApiResult<Response> {
    Ok(Json(blocking(move || s.ranking(&sid)).await?).into_response())
}

async fn train(
    State(s): State<Service>,
    Path((id, kind)): Path<(String, String)>,
    bytes: Bytes,
) -> ApiResult<Response> {
    let kind = match kind.as_str() {
        "reward" => JobKind::RewardModel,
        "agent" => JobKind::Agent,
        other => return Err(ApiError::not_found("training kind", other)),
    };
    let req: TrainRequest = body(&bytes, true)?;
    let job = blocking(move || s.enqueue_training(&id, kind, req)).await?;
    Ok((StatusCode::ACCEPTED, Json(job)).into_response())
}

async fn job(State(s): State<Service>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(s.job(&id)?).into_response())
}

async fn adapted_ui(
    State(s): State<Service>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let domain = parse_domain(param(&q, "domain")?)?;
    let technique = parse_technique(param(&q, "technique")?)?;
    let state: UiConfig = match q.get("state") {
        Some(st) => st.parse().map_err(|e: aui_core::ui::UiError| ApiError::bad_request(e.to_string()))?,
        None => UiConfig::default(),
    };
    Ok(Json(blocking(move || s.adapted_ui(&id, domain, state, technique)).await?).into_response())
}

async fn questionnaire(
    State(s): State<Service>,
    Path((id, period)): Path<(String, String)>,
    bytes: Bytes,
) -> ApiResult<Response> {
    let period: u8 = period
        .parse()
        .map_err(|_| ApiError::invalid(format!("period must be 1 or 2, got '{period}'")))?;
    let payload: QuestionnairePayload = body(&bytes, false)?;
    Ok(created(blocking(move || s.post_questionnaire(&id, period, payload)).await?))
}

async fn export(State(s): State<Service>) -> ApiResult<Response> {
    let csv = blocking(move || s.export_csv()).await?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv).into_response())
}

async fn corpus(State(s): State<Service>, Query(q): Query<HashMap<String, String>>) -> ApiResult<Response> {
    let domain = q.get("domain").map(|d| parse_domain(d)).transpose()?;
    Ok(Json(s.corpus(domain)).into_response())
}

async fn clip(State(s): State<Service>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(s.clip(&id)?).into_response())
}

/// Serves until ctrl-c.
pub async fn serve(service: Service, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
