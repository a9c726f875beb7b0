//! Routes, request/response types and the state they share.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use muqar_core::forecast::{ForecastError, ForecastModel, GarmentDescriptor};
use muqar_core::taxonomy::{LabelRef, Taxonomy, TaxonomySpec, Violation};
use muqar_core::trend::{
    attribute_window, AgeGroup, Demographic, Gender, SeriesExport, TrendError, TrendSeries,
    TrendStore, Week,
};

use crate::registry::Registry;

// ------------------------------------------------------------------ errors

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
    /// Set on internal errors; matches the server log entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: code.into(),
                message: message.into(),
                violations: Vec::new(),
                id: None,
            },
        }
    }

    fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    fn unprocessable(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }

    /// Opaque 500; the detail goes to the log only.
    pub fn internal(detail: impl std::fmt::Display) -> Self {
        let id = uuid::Uuid::new_v4().to_string();
        tracing::error!(error_id = %id, "{detail}");
        let mut e = Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", "internal error");
        e.body.id = Some(id);
        e
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

fn trend_error(e: TrendError) -> ApiError {
    match e {
        TrendError::InsufficientHistory { earliest } => ApiError::unprocessable(
            "insufficient_history",
            format!(
                "not enough trend history; earliest valid target week is {earliest} ({})",
                earliest.monday()
            ),
        ),
        TrendError::BeyondSeries { .. } => ApiError::unprocessable("beyond_trends", e.to_string()),
        TrendError::EmptyPeriod { .. } => ApiError::unprocessable("empty_period", e.to_string()),
        TrendError::NoRecords(_) => ApiError::unprocessable("no_records", e.to_string()),
        TrendError::Invalid(_) => ApiError::unprocessable("invalid_period", e.to_string()),
        other => ApiError::internal(other),
    }
}

// --------------------------------------------------------------- wire types

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GarmentInput {
    pub category: String,
    #[serde(default)]
    pub attributes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visual_features: Option<Vec<f64>>,
    /// Base64 image bytes. Decoding to features is not implemented; a
    /// thumbnail selects the category prototype.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thumbnail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastRequest {
    pub garment: GarmentInput,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demographic: Option<Demographic>,
    pub target_date: NaiveDate,
    /// Number of steps to return, at most the model's horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    Provided,
    CategoryPrototype,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeContext {
    pub attribute: String,
    /// ISO weeks before the target week, oldest first.
    pub weeks: Vec<String>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResponse {
    pub popularity: Vec<f64>,
    pub model_version: String,
    pub used_feature_source: FeatureSource,
    pub per_attribute_context: Vec<AttributeContext>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrendQuery {
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
    pub gender: Option<Gender>,
    pub age_group: Option<AgeGroup>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyIndices {
    pub garment_types: BTreeMap<String, usize>,
    pub categories: BTreeMap<String, usize>,
    pub attributes: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyPayload {
    #[serde(flatten)]
    pub taxonomy: TaxonomySpec,
    pub hash: String,
    pub indices: TaxonomyIndices,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivateRequest {
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivateResponse {
    pub model_version: String,
    pub taxonomy_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub model_version: Option<String>,
    pub taxonomy_hash: String,
    pub weeks_loaded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelList {
    pub versions: Vec<String>,
    pub active: Option<String>,
}

// -------------------------------------------------------------------- state

/// A loaded model; never mutated after activation.
#[derive(Debug)]
pub struct ActiveModel {
    pub version: String,
    pub model: ForecastModel,
}

/// Trend store plus the unfiltered series the models were trained on.
#[derive(Debug)]
pub struct TrendSnapshot {
    pub store: TrendStore,
    pub series: HashMap<LabelRef, TrendSeries>,
}

impl TrendSnapshot {
    pub fn new(store: TrendStore) -> Result<Self, TrendError> {
        let series = store.all_series(None, None)?;
        Ok(Self { store, series })
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        self.store.taxonomy()
    }
}

/// Shared service state. Readers take cheap `Arc` snapshots; model
/// activation and trend replacement are serialized and swap atomically.
#[derive(Debug)]
pub struct AppState {
    registry: Registry,
    trends: RwLock<Arc<TrendSnapshot>>,
    active: RwLock<Option<Arc<ActiveModel>>>,
    writer: Mutex<()>,
}

impl AppState {
    pub fn new(store: TrendStore, registry: Registry) -> Result<Self, TrendError> {
        Ok(Self {
            registry,
            trends: RwLock::new(Arc::new(TrendSnapshot::new(store)?)),
            active: RwLock::new(None),
            writer: Mutex::new(()),
        })
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn trends(&self) -> Arc<TrendSnapshot> {
        self.trends.read().expect("lock poisoned").clone()
    }

    pub fn active(&self) -> Option<Arc<ActiveModel>> {
        self.active.read().expect("lock poisoned").clone()
    }

    /// Load `version` from the registry and make it the active model.
    pub fn activate(&self, version: &str) -> Result<Arc<ActiveModel>, ApiError> {
        let _w = self.writer.lock().expect("lock poisoned");
        let hash = self.trends().taxonomy().hash();
        let model = match self.registry.load(version, &hash) {
            Ok(Some(m)) => m,
            Ok(None) => {
                return Err(ApiError::new(
                    StatusCode::NOT_FOUND,
                    "unknown_version",
                    format!("no model version '{version}'"),
                ))
            }
            Err(e @ ForecastError::TaxonomyMismatch { .. }) => {
                return Err(ApiError::new(StatusCode::CONFLICT, "taxonomy_mismatch", e.to_string()))
            }
            Err(e) => return Err(ApiError::internal(format!("loading '{version}': {e}"))),
        };
        let active = Arc::new(ActiveModel {
            version: version.to_string(),
            model,
        });
        *self.active.write().expect("lock poisoned") = Some(active.clone());
        tracing::info!(version, "model activated");
        Ok(active)
    }

    /// Swap in a re-ingested store. Refused when its taxonomy differs from
    /// the active model's.
    pub fn replace_trends(&self, store: TrendStore) -> Result<(), ApiError> {
        let _w = self.writer.lock().expect("lock poisoned");
        if let Some(a) = self.active() {
            let hash = store.taxonomy().hash();
            if a.model.meta().taxonomy_hash != hash {
                return Err(ApiError::new(
                    StatusCode::CONFLICT,
                    "taxonomy_mismatch",
                    "new trend store uses a different taxonomy than the active model",
                ));
            }
        }
        let snap = TrendSnapshot::new(store).map_err(trend_error)?;
        *self.trends.write().expect("lock poisoned") = Arc::new(snap);
        Ok(())
    }

    pub fn health(&self) -> Health {
        let t = self.trends();
        Health {
            model_version: self.active().map(|a| a.version.clone()),
            taxonomy_hash: t.taxonomy().hash(),
            weeks_loaded: t.store.weeks_loaded(),
        }
    }

    pub fn taxonomy_payload(&self) -> TaxonomyPayload {
        let t = self.trends();
        let tax = t.taxonomy();
        let spec = tax.spec().clone();
        let idx = |names: Vec<&String>| -> BTreeMap<String, usize> {
            names.into_iter().enumerate().map(|(i, n)| (n.clone(), i)).collect()
        };
        TaxonomyPayload {
            indices: TaxonomyIndices {
                garment_types: idx(spec.garment_types.iter().collect()),
                categories: idx(spec.categories.iter().map(|c| &c.name).collect()),
                attributes: idx(spec.attributes.iter().map(|a| &a.name).collect()),
            },
            hash: tax.hash(),
            taxonomy: spec,
        }
    }

    pub fn trend_series(&self, attribute: &str, q: &TrendQuery) -> Result<SeriesExport, ApiError> {
        let t = self.trends();
        let label = t.taxonomy().resolve_label(attribute).ok_or_else(|| {
            ApiError::new(
                StatusCode::NOT_FOUND,
                "unknown_attribute",
                format!("unknown attribute '{attribute}'"),
            )
        })?;
        let filter = match (q.gender, q.age_group) {
            (Some(g), Some(a)) => Some(Demographic::new(g, a)),
            (None, None) => None,
            _ => {
                return Err(ApiError::bad_request(
                    "incomplete_demographic",
                    "gender and age_group must be given together",
                ))
            }
        };
        let Some((first, last)) = t.store.period() else {
            return Err(ApiError::unprocessable("no_records", "the trend store is empty"));
        };
        let from = q.from.map_or(first, Week::from_date);
        let to = q.to.map_or(last, Week::from_date);
        if from > to {
            return Err(trend_error(TrendError::EmptyPeriod { from, to }));
        }
        let series = t
            .store
            .series(label, filter, Some((from, to)))
            .map_err(trend_error)?;
        Ok(series.export())
    }

    /// The forecast endpoint as a plain function of (active model, trend
    /// snapshot, request).
    pub fn forecast(&self, req: &ForecastRequest) -> Result<ForecastResponse, ApiError> {
        let active = self.active().ok_or_else(|| {
            ApiError::new(StatusCode::CONFLICT, "no_active_model", "no model is active")
        })?;
        let trends = self.trends();
        forecast_with(&active, &trends, req)
    }
}

pub fn forecast_with(
    active: &ActiveModel,
    trends: &TrendSnapshot,
    req: &ForecastRequest,
) -> Result<ForecastResponse, ApiError> {
    let model = &active.model;
    let cfg = model.config();
    let tax = trends.taxonomy();
    let g = &req.garment;
    if g.visual_features.is_some() && g.thumbnail.is_some() {
        return Err(ApiError::bad_request(
            "conflicting_features",
            "send visual_features or thumbnail, not both",
        ));
    }
    let labels = tax.label_set_from_names(&g.category, &g.attributes).map_err(|v| {
        let mut e = ApiError::bad_request("illegal_label_set", "label set violates the taxonomy");
        e.body.violations = v;
        e
    })?;
    let horizon = req.horizon.unwrap_or(cfg.k);
    if horizon == 0 || horizon > cfg.k {
        return Err(ApiError::bad_request(
            "invalid_horizon",
            format!("horizon must be between 1 and {}", cfg.k),
        ));
    }
    if let Some(t) = &g.thumbnail {
        base64::engine::general_purpose::STANDARD
            .decode(t)
            .map_err(|e| ApiError::bad_request("invalid_thumbnail", format!("thumbnail: {e}")))?;
    }
    let (features, source) = match &g.visual_features {
        Some(f) => {
            if cfg.architecture.uses_fusion() && f.len() != cfg.feature_dim {
                return Err(ApiError::bad_request(
                    "feature_dimension",
                    format!("expected {} visual features, got {}", cfg.feature_dim, f.len()),
                ));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(ApiError::bad_request("invalid_features", "visual features must be finite"));
            }
            (f.clone(), FeatureSource::Provided)
        }
        None => {
            let f = if cfg.architecture.uses_fusion() && cfg.feature_dim > 0 {
                model
                    .prototype(labels.category)
                    .ok_or_else(|| {
                        ApiError::unprocessable(
                            "no_prototype",
                            format!("no prototype features for category '{}'", g.category),
                        )
                    })?
                    .to_vec()
            } else {
                vec![0.0; cfg.feature_dim]
            };
            (f, FeatureSource::CategoryPrototype)
        }
    };
    if cfg.demographic && req.demographic.is_none() {
        return Err(ApiError::bad_request(
            "missing_demographic",
            "this model forecasts per demographic stratum; send one",
        ));
    }
    let descriptor = GarmentDescriptor {
        features,
        labels: labels.clone(),
        target_date: req.target_date,
        demographic: req.demographic,
    };
    let target = descriptor.target_week();
    let window = if cfg.architecture.uses_qar() {
        Some(
            attribute_window(|l| trends.series.get(&l), &labels.labels(), target, cfg.qar.n, cfg.qar.a_max)
                .map_err(trend_error)?,
        )
    } else {
        None
    };
    let raw = model.predict(&descriptor, window.as_ref()).map_err(|e| match e {
        ForecastError::Dimension { .. } | ForecastError::Input(_) | ForecastError::UnknownLabel(_) => {
            ApiError::bad_request("invalid_input", e.to_string())
        }
        ForecastError::MissingDemographic => ApiError::bad_request("missing_demographic", e.to_string()),
        other => ApiError::internal(other),
    })?;
    let popularity = raw.into_iter().take(horizon).map(|v| v.clamp(0.0, 1.0)).collect();
    let n = cfg.qar.n as i64;
    let per_attribute_context = labels
        .attributes
        .iter()
        .map(|&a| {
            let series = trends.series.get(&LabelRef::Attribute(a));
            let (weeks, values) = (1..=n)
                .rev()
                .map(|d| target.offset(-d))
                .filter_map(|w| series.and_then(|s| s.value_at(w)).map(|v| (w.to_string(), v)))
                .unzip();
            AttributeContext {
                attribute: tax.attribute_name(a).to_string(),
                weeks,
                values,
            }
        })
        .collect();
    Ok(ForecastResponse {
        popularity,
        model_version: active.version.clone(),
        used_feature_source: source,
        per_attribute_context,
    })
}

// ----------------------------------------------------------------- handlers

fn json_rejection(r: JsonRejection) -> ApiError {
    ApiError::bad_request("invalid_body", r.body_text())
}

async fn forecast(
    State(s): State<Arc<AppState>>,
    body: Result<Json<ForecastRequest>, JsonRejection>,
) -> Result<Json<ForecastResponse>, ApiError> {
    let Json(req) = body.map_err(json_rejection)?;
    s.forecast(&req).map(Json)
}

async fn trends(
    State(s): State<Arc<AppState>>,
    Path(attribute): Path<String>,
    query: Result<Query<TrendQuery>, QueryRejection>,
) -> Result<Json<SeriesExport>, ApiError> {
    let Query(q) = query.map_err(|r| ApiError::bad_request("invalid_query", r.body_text()))?;
    s.trend_series(&attribute, &q).map(Json)
}

async fn taxonomy(State(s): State<Arc<AppState>>) -> Json<TaxonomyPayload> {
    Json(s.taxonomy_payload())
}

async fn activate(
    State(s): State<Arc<AppState>>,
    body: Result<Json<ActivateRequest>, JsonRejection>,
) -> Result<Json<ActivateResponse>, ApiError> {
    let Json(req) = body.map_err(json_rejection)?;
    let a = tokio::task::spawn_blocking(move || s.activate(&req.version))
        .await
        .map_err(ApiError::internal)??;
    Ok(Json(ActivateResponse {
        model_version: a.version.clone(),
        taxonomy_hash: a.model.meta().taxonomy_hash.clone(),
    }))
}

async fn models(State(s): State<Arc<AppState>>) -> Result<Json<ModelList>, ApiError> {
    Ok(Json(ModelList {
        versions: s.registry().versions().map_err(ApiError::internal)?,
        active: s.active().map(|a| a.version.clone()),
    }))
}

async fn healthz(State(s): State<Arc<AppState>>) -> Response {
    let h = s.health();
    let status = if h.model_version.is_some() {
        StatusCode::OK
    } else {
        StatusCode::SERVICE_UNAVAILABLE
    };
    (status, Json(h)).into_response()
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/forecast", post(forecast))
        .route("/v1/trends/{attribute}", get(trends))
        .route("/v1/taxonomy", get(taxonomy))
        .route("/v1/models", get(models))
        .route("/v1/models/activate", post(activate))
        .route("/healthz", get(healthz))
        .with_state(state)
}
