use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use cagkit_core::dataset::{CorpusRecord, Split};
use cagkit_core::ingest::{decode_image, encode_png, BitDepth};
use cagkit_core::review::{
    export_review_table, find_conflicts, AnnotationSubmission, ReviewSubmission, StoreError,
    ValidationFailure,
};
use serde::{Deserialize, Serialize};

use crate::AppState;

type Shared = Arc<AppState>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub message: String,
}

pub(crate) struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody { code: code.to_string(), field: None, message: message.into() },
        }
    }

    fn unknown_case(what: String) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_case", what)
    }
}

impl From<ValidationFailure> for ApiError {
    fn from(v: ValidationFailure) -> Self {
        Self {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            body: ErrorBody {
                code: "validation_failure".into(),
                field: Some(v.field.clone()),
                message: v.to_string(),
            },
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "store_error", e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub(crate) fn router(state: Shared) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/cases", get(list_cases))
        .route("/v1/cases/{id}", get(get_case))
        .route("/v1/cases/{id}/frame.png", get(frame_png))
        .route("/v1/annotations", get(list_annotations).post(post_annotation))
        .route("/v1/annotations/conflicts", get(conflicts))
        .route("/v1/reviews", get(list_reviews).post(post_review))
        .route("/v1/exports/review-table", get(review_table))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route") })
        .with_state(state)
}

/// Reviewer id of the bearer token; `None` when authentication is off.
fn authenticate(state: &AppState, headers: &HeaderMap) -> ApiResult<Option<String>> {
    if state.tokens.is_empty() {
        return Ok(None);
    }
    let token = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim);
    match token.and_then(|t| state.tokens.get(t)) {
        Some(id) => Ok(Some(id.clone())),
        None => Err(ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or unknown bearer token")),
    }
}

/// Fills an empty identity from the token and rejects a mismatching one.
fn bind_identity(field: &str, claimed: &mut String, token_id: Option<String>) -> ApiResult<()> {
    if let Some(id) = token_id {
        if claimed.is_empty() {
            *claimed = id;
        } else if *claimed != id {
            return Err(ApiError {
                status: StatusCode::FORBIDDEN,
                body: ErrorBody {
                    code: "forbidden".into(),
                    field: Some(field.to_string()),
                    message: format!("token belongs to {id}"),
                },
            });
        }
    }
    Ok(())
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "malformed_body", e.to_string()))
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({"status": "ok"}))
}

#[derive(Serialize)]
struct CaseSummary<'a> {
    case_id: String,
    exam_id: &'a str,
    video_id: &'a str,
    frame_index: usize,
    laterality: cagkit_core::Laterality,
    complete: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
    models: Vec<&'a str>,
}

#[derive(Deserialize)]
struct CasesQuery {
    split: Option<String>,
}

async fn list_cases(
    State(state): State<Shared>,
    headers: HeaderMap,
    Query(q): Query<CasesQuery>,
) -> ApiResult<Response> {
    authenticate(&state, &headers)?;
    let wanted = match q.split.as_deref() {
        None | Some("") => None,
        Some(s) => {
            let split = match s {
                "train" => Split::Train,
                "val" => Split::Val,
                "test" => Split::Test,
                other => {
                    return Err(ApiError {
                        status: StatusCode::BAD_REQUEST,
                        body: ErrorBody {
                            code: "bad_request".into(),
                            field: Some("split".into()),
                            message: format!("unknown split {other:?}"),
                        },
                    })
                }
            };
            if !state.catalog.has_manifest() {
                return Err(ApiError::new(StatusCode::BAD_REQUEST, "no_split_manifest", "service has no split manifest"));
            }
            Some(split)
        }
    };
    let cases: Vec<CaseSummary> = state
        .catalog
        .records()
        .map(|r| (r, state.catalog.split_of(r)))
        .filter(|(_, s)| wanted.is_none() || *s == wanted)
        .map(|(r, split)| CaseSummary {
            case_id: r.case_id(),
            exam_id: &r.exam_id,
            video_id: &r.video_id,
            frame_index: r.frame_index,
            laterality: r.laterality,
            complete: r.complete,
            split,
            models: r.generated.keys().map(String::as_str).collect(),
        })
        .collect();
    Ok(Json(cases).into_response())
}

#[derive(Serialize)]
struct CaseDetail<'a> {
    case_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
    #[serde(flatten)]
    record: &'a CorpusRecord,
}

fn lookup<'a>(state: &'a AppState, id: &str) -> ApiResult<&'a CorpusRecord> {
    state.catalog.get(id).ok_or_else(|| ApiError::unknown_case(format!("no case {id}")))
}

async fn get_case(State(state): State<Shared>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult<Response> {
    authenticate(&state, &headers)?;
    let record = lookup(&state, &id)?;
    Ok(Json(CaseDetail { case_id: record.case_id(), split: state.catalog.split_of(record), record }).into_response())
}

async fn frame_png(State(state): State<Shared>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult<Response> {
    authenticate(&state, &headers)?;
    let record = lookup(&state, &id)?;
    let path = state.catalog.frame_path(record);
    let png = tokio::task::spawn_blocking(move || -> ApiResult<Vec<u8>> {
        let bytes = std::fs::read(&path).map_err(|e| {
            ApiError::new(StatusCode::NOT_FOUND, "frame_unavailable", format!("{}: {e}", path.display()))
        })?;
        let img = decode_image(&bytes)
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "render_failed", e.to_string()))?;
        // Display copy: always 8-bit.
        let max = u32::from(img.bit_depth.max_value());
        let pixels: Vec<u16> = img.pixels.iter().map(|&p| (u32::from(p) * 255 / max) as u16).collect();
        Ok(encode_png(img.width, img.height, BitDepth::Eight, &pixels))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "render_failed", e.to_string()))??;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

async fn post_annotation(State(state): State<Shared>, headers: HeaderMap, body: Bytes) -> ApiResult<Response> {
    let token_id = authenticate(&state, &headers)?;
    let mut sub: AnnotationSubmission = parse_body(&body)?;
    bind_identity("annotator_id", &mut sub.annotator_id, token_id)?;
    let record = sub.validate(chrono::Utc::now())?;
    if !state.catalog.has_frame(&record.video_id, record.frame_index) {
        return Err(ApiError::unknown_case(format!(
            "no frame {} in video {}",
            record.frame_index, record.video_id
        )));
    }
    let shared = state.clone();
    let stored = tokio::task::spawn_blocking(move || shared.store.write().expect("store lock").append_annotation(record))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "store_error", e.to_string()))??;
    Ok((StatusCode::CREATED, Json(stored)).into_response())
}

async fn list_annotations(State(state): State<Shared>, headers: HeaderMap) -> ApiResult<Response> {
    authenticate(&state, &headers)?;
    let store = state.store.read().expect("store lock");
    Ok(Json(store.annotations()).into_response())
}

async fn conflicts(State(state): State<Shared>, headers: HeaderMap) -> ApiResult<Response> {
    authenticate(&state, &headers)?;
    let store = state.store.read().expect("store lock");
    Ok(Json(find_conflicts(store.annotations())).into_response())
}

async fn post_review(State(state): State<Shared>, headers: HeaderMap, body: Bytes) -> ApiResult<Response> {
    let token_id = authenticate(&state, &headers)?;
    let mut sub: ReviewSubmission = parse_body(&body)?;
    bind_identity("reviewer_id", &mut sub.reviewer_id, token_id)?;
    let record = sub.validate(chrono::Utc::now())?;
    let case = lookup(&state, &record.case_id)?;
    if !case.generated.contains_key(&record.model_id) {
        return Err(ValidationFailure::new(
            "model_id",
            format!("case {} has no output from model {}", record.case_id, record.model_id),
        )
        .into());
    }
    let shared = state.clone();
    let stored = tokio::task::spawn_blocking(move || shared.store.write().expect("store lock").append_review(record))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "store_error", e.to_string()))??;
    Ok((StatusCode::CREATED, Json(stored)).into_response())
}

async fn list_reviews(State(state): State<Shared>, headers: HeaderMap) -> ApiResult<Response> {
    authenticate(&state, &headers)?;
    let store = state.store.read().expect("store lock");
    Ok(Json(store.reviews()).into_response())
}

#[derive(Deserialize)]
struct ExportQuery {
    format: Option<String>,
}

async fn review_table(
    State(state): State<Shared>,
    headers: HeaderMap,
    Query(q): Query<ExportQuery>,
) -> ApiResult<Response> {
    authenticate(&state, &headers)?;
    let table = {
        let store = state.store.read().expect("store lock");
        export_review_table(store.reviews(), state.catalog.models())
    };
    match q.format.as_deref().unwrap_or("json") {
        "json" => Ok(([(header::CONTENT_TYPE, "application/json")], table.to_json()).into_response()),
        "text" => Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], table.render_text()).into_response()),
        other => Err(ApiError {
            status: StatusCode::BAD_REQUEST,
            body: ErrorBody {
                code: "bad_request".into(),
                field: Some("format".into()),
                message: format!("unknown format {other:?}; use json or text"),
            },
        }),
    }
}
