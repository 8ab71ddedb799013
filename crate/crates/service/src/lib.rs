//! HTTP annotation service: hands out judging tasks built from pools and
//! stores the submitted judgments.
//!
//! | route | reply |
//! |---|---|
//! | `GET /api/categories` | category labels |
//! | `GET /api/tasks/next?category=&worker=` | a task, or 204 when none remain |
//! | `POST /api/judgments[?category=]` | an [`Ack`]; 200 accepted, 422 rejected |
//! | `GET /api/progress?category=` | [`Progress`] counts |
//! | `GET /api/export?category=[&min_votes=]` | consolidated qrels as text |
//!
//! Anything else is served from the optional UI directory.

mod error;
mod store;

use std::path::PathBuf;
use std::sync::Arc;

use altereval_core::judgments::AnnotationRecord;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use tower_http::services::ServeDir;

pub use error::{ServiceError, ServiceResult};
pub use store::{
    Ack, JudgingStore, JudgingTask, Progress, ANNOTATIONS_FILE, ASSIGNMENTS_FILE, DEFAULT_PAYLOAD_TEMPLATE,
};

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::UnknownCategory(_) => StatusCode::NOT_FOUND,
            ServiceError::Input(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

type Shared = Arc<JudgingStore>;

/// Runs a store operation off the async executor, since it may fsync.
async fn blocking<T, F>(store: &Shared, f: F) -> ServiceResult<T>
where
    T: Send + 'static,
    F: FnOnce(&JudgingStore) -> ServiceResult<T> + Send + 'static,
{
    let store = Arc::clone(store);
    tokio::task::spawn_blocking(move || f(&store))
        .await
        .map_err(|e| ServiceError::Input(format!("worker task failed: {e}")))?
}

async fn categories(State(store): State<Shared>) -> Json<Vec<String>> {
    Json(store.categories())
}

#[derive(Deserialize)]
struct NextQuery {
    category: String,
    worker: String,
}

async fn next_task(State(store): State<Shared>, Query(q): Query<NextQuery>) -> ServiceResult<Response> {
    let task = blocking(&store, move |s| s.next_task(&q.category, &q.worker)).await?;
    Ok(match task {
        Some(t) => Json(t).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

#[derive(Deserialize)]
struct SubmitQuery {
    category: Option<String>,
}

async fn submit(
    State(store): State<Shared>,
    Query(q): Query<SubmitQuery>,
    Json(record): Json<AnnotationRecord>,
) -> ServiceResult<Response> {
    let ack = blocking(&store, move |s| s.submit(q.category.as_deref(), record)).await?;
    let status = if ack.accepted {
        StatusCode::OK
    } else {
        StatusCode::UNPROCESSABLE_ENTITY
    };
    Ok((status, Json(ack)).into_response())
}

#[derive(Deserialize)]
struct CategoryQuery {
    category: String,
}

async fn progress(State(store): State<Shared>, Query(q): Query<CategoryQuery>) -> ServiceResult<Json<Progress>> {
    Ok(Json(store.progress(&q.category)?))
}

#[derive(Deserialize)]
struct ExportQuery {
    category: String,
    min_votes: Option<usize>,
}

async fn export(State(store): State<Shared>, Query(q): Query<ExportQuery>) -> ServiceResult<String> {
    let set = store.export_qrels(&q.category, q.min_votes.unwrap_or(1))?;
    Ok(set.to_qrels_string())
}

/// Builds the HTTP router. Requests outside `/api` are served from `ui_dir`
/// when one is given.
pub fn router(store: Arc<JudgingStore>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/categories", get(categories))
        .route("/api/tasks/next", get(next_task))
        .route("/api/judgments", post(submit))
        .route("/api/progress", get(progress))
        .route("/api/export", get(export))
        .with_state(store);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves `app` on `listener` until the process is stopped.
pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app).await
}
