use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{FromRequest, Request, State};
use axum::http::{HeaderName, HeaderValue, StatusCode};
use axum::middleware::map_response;
use axum::response::Response;
use axum::routing::{get, post};
use axum::{Json, Router};
use essaycbm::data::{load_jsonl, parse_record, ConceptVector, LabeledEssay};
use essaycbm::inference::{
    explain, grade_essay, intervene, GradingResult, InterventionRequest, InterventionResult, WhatIfTable,
};
use essaycbm::model::AnyModel;
use essaycbm::train::{evaluate, EvalReport};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::error::ApiError;
use crate::registry::{ModelInfo, ModelRegistry};

pub const API_VERSION_HEADER: &str = "x-cbm-api";
pub const API_VERSION: &str = "1";

/// JSON body extractor whose rejections use the service error shape.
pub struct ApiJson<T>(pub T);

impl<S, T> FromRequest<S> for ApiJson<T>
where
    T: DeserializeOwned,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        let Json(value) = Json::<T>::from_request(req, state).await?;
        Ok(ApiJson(value))
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradeBody {
    pub text: String,
    pub model_id: String,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterveneBody {
    pub concepts: Vec<i64>,
    #[serde(default)]
    pub overrides: BTreeMap<String, i64>,
    pub model_id: String,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateBody {
    pub model_id: String,
    pub dataset_path: Option<PathBuf>,
    pub records: Option<Vec<serde_json::Value>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainBody {
    pub model_id: String,
    pub text: Option<String>,
    pub concepts: Option<Vec<i64>>,
}

type AppState = Arc<ModelRegistry>;

async fn cbm_model(registry: &ModelRegistry, model_id: &str) -> Result<Arc<AnyModel>, ApiError> {
    let model = registry.get(model_id).await?;
    model.as_cbm()?;
    Ok(model)
}

fn require_registered(registry: &ModelRegistry, model_id: &str) -> Result<(), ApiError> {
    if registry.contains(model_id) {
        Ok(())
    } else {
        Err(crate::registry::RegistryError::Unknown(model_id.to_string()).into())
    }
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

async fn grade(
    State(registry): State<AppState>,
    ApiJson(body): ApiJson<GradeBody>,
) -> Result<Json<GradingResult>, ApiError> {
    require_registered(&registry, &body.model_id)?;
    let model = cbm_model(&registry, &body.model_id).await?;
    let result = blocking(move || {
        let cbm = model.as_cbm()?;
        Ok(grade_essay(cbm, &body.model_id, &body.text)?)
    })
    .await?;
    Ok(Json(result))
}

async fn intervene_route(
    State(registry): State<AppState>,
    ApiJson(body): ApiJson<InterveneBody>,
) -> Result<Json<InterventionResult>, ApiError> {
    require_registered(&registry, &body.model_id)?;
    let request = InterventionRequest::from_raw(&body.concepts, &body.overrides)?;
    let model = cbm_model(&registry, &body.model_id).await?;
    Ok(Json(intervene(model.as_cbm()?, &request)))
}

async fn explain_route(
    State(registry): State<AppState>,
    ApiJson(body): ApiJson<ExplainBody>,
) -> Result<Json<WhatIfTable>, ApiError> {
    require_registered(&registry, &body.model_id)?;
    let concepts = match (&body.text, &body.concepts) {
        (Some(_), None) => None,
        (None, Some(c)) => Some(ConceptVector::from_slice(c)?),
        _ => return Err(ApiError::validation("provide exactly one of text or concepts")),
    };
    let model = cbm_model(&registry, &body.model_id).await?;
    let table = blocking(move || {
        let cbm = model.as_cbm()?;
        let concepts = match concepts {
            Some(c) => c,
            None => grade_essay(cbm, &body.model_id, body.text.as_deref().unwrap_or_default())?.concept_vector,
        };
        Ok(explain(cbm, &concepts))
    })
    .await?;
    Ok(Json(table))
}

fn inline_records(records: &[serde_json::Value]) -> Result<Vec<LabeledEssay>, ApiError> {
    records
        .iter()
        .enumerate()
        .map(|(i, v)| parse_record(v, i + 1).map_err(ApiError::from))
        .collect()
}

async fn evaluate_route(
    State(registry): State<AppState>,
    ApiJson(body): ApiJson<EvaluateBody>,
) -> Result<Json<EvalReport>, ApiError> {
    require_registered(&registry, &body.model_id)?;
    let model = registry.get(&body.model_id).await?;
    let report = blocking(move || {
        let essays = match (&body.dataset_path, &body.records) {
            (Some(path), None) => load_jsonl(path)?,
            (None, Some(records)) => inline_records(records)?,
            _ => return Err(ApiError::validation("provide exactly one of dataset_path or records")),
        };
        if essays.is_empty() {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "invalid_dataset",
                "dataset has no records",
            ));
        }
        Ok(match model.as_ref() {
            AnyModel::Cbm(m) => evaluate(m, &essays)?,
            AnyModel::Baseline(m) => evaluate(m, &essays)?,
        })
    })
    .await?;
    Ok(Json(report))
}

async fn models(State(registry): State<AppState>) -> Json<Vec<ModelInfo>> {
    Json(registry.list())
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

async fn method_not_allowed() -> ApiError {
    ApiError::new(
        StatusCode::METHOD_NOT_ALLOWED,
        "method_not_allowed",
        "method not allowed on this endpoint",
    )
}

async fn version_header(mut res: Response) -> Response {
    res.headers_mut().insert(
        HeaderName::from_static(API_VERSION_HEADER),
        HeaderValue::from_static(API_VERSION),
    );
    res
}

pub fn router(registry: Arc<ModelRegistry>) -> Router {
    Router::new()
        .route("/grade", post(grade))
        .route("/intervene", post(intervene_route))
        .route("/explain", post(explain_route))
        .route("/evaluate", post(evaluate_route))
        .route("/models", get(models))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .with_state(registry)
        .layer(map_response(version_header))
}
