//! JSON routes over [`Sessions`].

use crate::session::{Poll, Question, Session, SessionId, Sessions, Stats, Status, SubmitError};
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::sync::Arc;
use std::time::Duration;
use treecut::hierarchy::TreeFile;
use treecut::{Clustering, Hierarchy, LeafId};

/// How long a request waits for the learner to reach its next question.
const SETTLE: Duration = Duration::from_secs(2);

pub type AppState = Arc<Sessions>;

pub struct ApiError(StatusCode, String);

impl ApiError {
    fn bad_request(msg: impl Into<String>) -> Self {
        Self(StatusCode::BAD_REQUEST, msg.into())
    }

    fn not_found() -> Self {
        Self(StatusCode::NOT_FOUND, "no such session".into())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::bad_request(e.body_text())
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create).get(list))
        .route("/sessions/{id}", get(stats).delete(delete))
        .route("/sessions/{id}/question", get(question))
        .route("/sessions/{id}/answer", post(answer))
        .route("/sessions/{id}/clustering", get(clustering))
        .route("/sessions/{id}/stats", get(stats))
        .route("/sessions/{id}/stop", post(stop))
        .fallback(|| async { ApiError(StatusCode::NOT_FOUND, "no such route".into()) })
        .with_state(state)
}

fn session(state: &Sessions, id: &str) -> ApiResult<Arc<Session>> {
    id.parse::<SessionId>().ok().and_then(|id| state.get(id)).ok_or_else(ApiError::not_found)
}

async fn settle(s: &Arc<Session>) {
    let s = s.clone();
    let _ = tokio::task::spawn_blocking(move || s.wait_settled(SETTLE)).await;
}

/// Runs a blocking computation such as a replayed clustering off the runtime.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    tree: Option<TreeFile>,
    tree_path: Option<String>,
    #[serde(default = "default_algorithm")]
    algorithm: String,
    params: Option<Value>,
    #[serde(default)]
    seed: u64,
    budget: Option<u64>,
}

fn default_algorithm() -> String {
    "nwdp".into()
}

async fn create(State(state): State<AppState>, body: Result<Json<CreateRequest>, JsonRejection>) -> ApiResult<Response> {
    let Json(req) = body?;
    let config = crate::session::LearnerConfig::parse(&req.algorithm, req.params).map_err(ApiError::bad_request)?;
    let tree = match (req.tree, req.tree_path) {
        (Some(f), None) => Hierarchy::from_file(&f),
        (None, Some(p)) => Hierarchy::load(p),
        _ => return Err(ApiError::bad_request("give exactly one of `tree` and `tree_path`")),
    }
    .map_err(|e| ApiError::bad_request(format!("invalid tree: {e}")))?;
    let s = state.create(tree, config, req.seed, req.budget).map_err(ApiError::bad_request)?;
    settle(&s).await;
    let body = json!({
        "id": s.id,
        "algorithm": s.algorithm(),
        "n": s.tree.n_leaves(),
        "seed": s.seed,
        "budget": s.budget,
        "status": s.status(),
    });
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn list(State(state): State<AppState>) -> Json<Value> {
    Json(json!({ "sessions": state.ids() }))
}

#[derive(Serialize)]
struct ClusterView<'a> {
    leaves: &'a [LeafId],
    payloads: Vec<&'a str>,
}

fn clusters_view<'a>(h: &'a Hierarchy, c: &'a Clustering) -> Vec<ClusterView<'a>> {
    c.clusters()
        .iter()
        .map(|leaves| ClusterView { leaves, payloads: leaves.iter().map(|&l| h.payload(l)).collect() })
        .collect()
}

fn question_view(h: &Hierarchy, q: Question) -> Value {
    json!({
        "done": false,
        "question_id": q.id,
        "a": q.a,
        "b": q.b,
        "payload_a": h.payload(q.a),
        "payload_b": h.payload(q.b),
    })
}

async fn question(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let s = session(&state, &id)?;
    settle(&s).await;
    Ok(Json(match s.poll() {
        Poll::Ask(q) => question_view(&s.tree, q),
        Poll::Working => json!({ "done": false, "question_id": null }),
        Poll::Done => {
            let c = blocking({
                let s = s.clone();
                move || s.clustering()
            })
            .await?
            .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
            json!({ "done": true, "clustering": clusters_view(&s.tree, &c) })
        }
    }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AnswerRequest {
    question_id: u64,
    similar: bool,
}

async fn answer(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<AnswerRequest>, JsonRejection>,
) -> ApiResult<Json<Value>> {
    let s = session(&state, &id)?;
    let Json(req) = body?;
    match s.submit(req.question_id, req.similar) {
        Ok(_) => {
            settle(&s).await;
            let st = blocking(move || s.stats()).await?;
            Ok(Json(json!({
                "accepted": true,
                "progress": {
                    "queries": st.questions_answered,
                    "clusters": st.clusters,
                    "done": st.status == Status::Done,
                },
            })))
        }
        Err(SubmitError::Stale { given, pending }) => Err(ApiError(
            StatusCode::CONFLICT,
            match pending {
                Some(p) => format!("question {given} is not pending; the pending question is {p}"),
                None => format!("question {given} is not pending; no question is pending"),
            },
        )),
    }
}

async fn clustering(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let s = session(&state, &id)?;
    let done = s.status() == Status::Done;
    let c = blocking({
        let s = s.clone();
        move || s.clustering()
    })
    .await?
    .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(Json(json!({
        "id": s.id,
        "done": done,
        "k": c.k(),
        "clusters": clusters_view(&s.tree, &c),
    })))
}

async fn stats(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Stats>> {
    let s = session(&state, &id)?;
    Ok(Json(blocking(move || s.stats()).await?))
}

async fn stop(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Stats>> {
    let s = session(&state, &id)?;
    s.stop();
    settle(&s).await;
    Ok(Json(blocking(move || s.stats()).await?))
}

async fn delete(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    let id: SessionId = id.parse().map_err(|_| ApiError::not_found())?;
    if state.remove(id) {
        Ok(StatusCode::NO_CONTENT)
    } else {
        Err(ApiError::not_found())
    }
}
