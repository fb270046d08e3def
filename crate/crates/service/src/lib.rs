//! HTTP JSON API over the grading library.
//!
//! | method | path         | body                                           | response        |
//! |--------|--------------|------------------------------------------------|-----------------|
//! | POST   | `/grade`     | `{text, model_id}`                             | grading result  |
//! | POST   | `/intervene` | `{concepts: [8 ints], overrides: {k: v}, model_id}` | intervention result |
//! | POST   | `/explain`   | `{text}` or `{concepts}`, plus `model_id`      | what-if table   |
//! | POST   | `/evaluate`  | `{dataset_path}` or `{records}`, plus `model_id` | evaluation report |
//! | GET    | `/models`    |                                                | registry listing |
//!
//! Every response carries `X-CBM-API: 1`. Errors are `{"error", "detail"}`
//! with 400 (malformed body), 404 (unknown model or route), 422 (invalid
//! input), 503 (checkpoint failed to load).

mod api;
mod error;
mod registry;

use std::future::Future;
use std::sync::Arc;

pub use api::{router, ApiJson, EvaluateBody, ExplainBody, GradeBody, InterveneBody, API_VERSION, API_VERSION_HEADER};
pub use error::ApiError;
pub use registry::{LoadState, ModelInfo, ModelRegistry, RegistryError};

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve(
    listener: tokio::net::TcpListener,
    registry: Arc<ModelRegistry>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(registry))
        .with_graceful_shutdown(shutdown)
        .await
}
