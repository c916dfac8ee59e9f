//! HTTP service over the monitor store and runtime context.
//!
//! Read endpoints answer from the store and the current aggregate view;
//! every mutating endpoint maps onto one store or context operation and
//! requires the bearer token.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use chrono::{NaiveDate, Utc};
use monitor_core::config::ApiConfig;
use monitor_core::context::{ContextError, MonitorContext};
use monitor_core::ingest::{SourceConfig, SourceType};
use monitor_core::polarity::PolarityError;
use monitor_core::pipeline::spawn_view_refresher;
use monitor_core::store::{AggregateRow, Filters, MentionRecord, SourceRow, StoreError, Tier};
use monitor_core::{Polarity, SourceKind};
use serde::{Deserialize, Serialize};

pub const DEFAULT_PAGE_SIZE: usize = 50;
pub const MAX_PAGE_SIZE: usize = 500;
pub const DEFAULT_TOP_N: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("missing or invalid bearer token")]
    Unauthorized,
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("{0}")]
    Internal(String),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("no API token configured; set it in the config file or in MONITOR_TOKEN")]
    NoToken,
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::Unauthorized => StatusCode::UNAUTHORIZED,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        (status, Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(id) => ApiError::NotFound(format!("mention {id} not found")),
            e => ApiError::Internal(e.to_string()),
        }
    }
}

impl From<ContextError> for ApiError {
    fn from(e: ContextError) -> Self {
        match e {
            ContextError::Store(s) => s.into(),
            ContextError::Taxonomy(t) => ApiError::BadRequest(t.to_string()),
            ContextError::Polarity(
                p @ (PolarityError::EmptyData
                | PolarityError::SingleClassData
                | PolarityError::UnsupportedLanguage(_)
                | PolarityError::InvalidFolds { .. }),
            ) => ApiError::Unprocessable(p.to_string()),
            e => ApiError::Internal(e.to_string()),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Clone)]
pub struct ApiState {
    pub ctx: Arc<MonitorContext>,
    /// Without a token every mutating request is refused.
    pub token: Option<Arc<str>>,
}

impl ApiState {
    pub fn new(ctx: Arc<MonitorContext>, token: Option<String>) -> Self {
        ApiState {
            ctx,
            token: token.map(Arc::from),
        }
    }

    fn presented(headers: &HeaderMap) -> Option<&str> {
        headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(str::trim)
    }

    /// Mutations need the right token.
    fn require(&self, headers: &HeaderMap) -> ApiResult<()> {
        match (Self::presented(headers), &self.token) {
            (Some(p), Some(t)) if p == &**t => Ok(()),
            _ => Err(ApiError::Unauthorized),
        }
    }

    /// Reads are open, but a wrong token is still refused.
    fn check(&self, headers: &HeaderMap) -> ApiResult<()> {
        match Self::presented(headers) {
            None => Ok(()),
            Some(_) => self.require(headers),
        }
    }
}

/// Query-string parameters shared by the read endpoints.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueryParams {
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
    /// `FROM..TO`, either side optional.
    pub period: Option<String>,
    pub lang: Option<String>,
    pub category: Option<String>,
    pub source_kind: Option<SourceKind>,
    pub polarity: Option<Polarity>,
    pub tier: Option<Tier>,
    pub page: Option<usize>,
    pub page_size: Option<usize>,
    pub n: Option<usize>,
}

fn parse_day(s: &str) -> ApiResult<Option<NaiveDate>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map(Some)
        .map_err(|_| ApiError::BadRequest(format!("bad date {s:?}")))
}

impl QueryParams {
    pub fn filters(&self) -> ApiResult<Filters> {
        let (mut from, mut to) = (self.from, self.to);
        if let Some(period) = &self.period {
            let (a, b) = period
                .split_once("..")
                .ok_or_else(|| ApiError::BadRequest(format!("period {period:?} is not FROM..TO")))?;
            from = from.or(parse_day(a)?);
            to = to.or(parse_day(b)?);
        }
        Ok(Filters {
            from,
            to,
            lang: self.lang.clone(),
            category: self.category.clone(),
            source_kind: self.source_kind,
            polarity: self.polarity,
            tier: self.tier,
        })
    }

    pub fn page_size(&self) -> usize {
        self.page_size.unwrap_or(DEFAULT_PAGE_SIZE).min(MAX_PAGE_SIZE)
    }

    pub fn offset(&self) -> usize {
        self.page.unwrap_or(0).saturating_mul(self.page_size())
    }

    pub fn top_n(&self) -> usize {
        self.n.unwrap_or(DEFAULT_TOP_N).min(MAX_PAGE_SIZE)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub view_version: u64,
    pub taxonomy_version: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MentionsPage {
    pub page: usize,
    pub page_size: usize,
    pub mentions: Vec<MentionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatesPayload {
    pub version: u64,
    pub refreshed_at: Option<chrono::DateTime<Utc>>,
    pub rows: Vec<AggregateRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarityPatch {
    pub label: Polarity,
    #[serde(default)]
    pub operator: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarityPatched {
    pub mention_id: i64,
    pub label: Polarity,
    pub changed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainRequest {
    pub lang: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyUpdated {
    pub version: u64,
}

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> ApiResult<T> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

async fn health(State(s): State<ApiState>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        view_version: s.ctx.store.view().version,
        taxonomy_version: s.ctx.matcher.current().version(),
    })
}

async fn mentions(State(s): State<ApiState>, headers: HeaderMap, Query(q): Query<QueryParams>) -> ApiResult<Json<MentionsPage>> {
    s.check(&headers)?;
    let filters = q.filters()?;
    blocking(move || {
        Ok(Json(MentionsPage {
            page: q.page.unwrap_or(0),
            page_size: q.page_size(),
            mentions: s.ctx.store.recent_mentions(q.page_size(), q.offset(), &filters)?,
        }))
    })
    .await
}

async fn aggregates(
    State(s): State<ApiState>,
    headers: HeaderMap,
    Query(q): Query<QueryParams>,
) -> ApiResult<Json<AggregatesPayload>> {
    s.check(&headers)?;
    let filters = q.filters()?;
    let view = s.ctx.store.view();
    Ok(Json(AggregatesPayload {
        version: view.version,
        refreshed_at: view.refreshed_at,
        rows: view.rows.iter().filter(|r| filters.accepts_row(r)).cloned().collect(),
    }))
}

async fn top_authors(State(s): State<ApiState>, headers: HeaderMap, Query(q): Query<QueryParams>) -> ApiResult<Response> {
    s.check(&headers)?;
    let filters = q.filters()?;
    blocking(move || Ok(Json(s.ctx.store.top_authors(&filters, q.top_n())?).into_response())).await
}

async fn top_spread(State(s): State<ApiState>, headers: HeaderMap, Query(q): Query<QueryParams>) -> ApiResult<Response> {
    s.check(&headers)?;
    let filters = q.filters()?;
    blocking(move || Ok(Json(s.ctx.store.top_spread(&filters, q.top_n())?).into_response())).await
}

async fn get_taxonomy(State(s): State<ApiState>, headers: HeaderMap) -> ApiResult<Response> {
    s.check(&headers)?;
    Ok(Json(s.ctx.taxonomy()).into_response())
}

async fn put_taxonomy(State(s): State<ApiState>, headers: HeaderMap, body: String) -> ApiResult<Json<TaxonomyUpdated>> {
    s.require(&headers)?;
    blocking(move || Ok(Json(TaxonomyUpdated { version: s.ctx.replace_taxonomy(&body)? }))).await
}

async fn patch_polarity(
    State(s): State<ApiState>,
    headers: HeaderMap,
    Path(id): Path<i64>,
    Json(body): Json<PolarityPatch>,
) -> ApiResult<Json<PolarityPatched>> {
    s.require(&headers)?;
    blocking(move || {
        let operator = body.operator.unwrap_or_else(|| "api".into());
        let changed = s.ctx.store.correct_label(id, body.label, &operator, Utc::now())?;
        Ok(Json(PolarityPatched {
            mention_id: id,
            label: body.label,
            changed,
        }))
    })
    .await
}

async fn list_sources(State(s): State<ApiState>, headers: HeaderMap) -> ApiResult<Json<Vec<SourceRow>>> {
    s.check(&headers)?;
    blocking(move || Ok(Json(s.ctx.store.sources()?))).await
}

async fn post_source(
    State(s): State<ApiState>,
    headers: HeaderMap,
    Json(src): Json<SourceConfig>,
) -> ApiResult<(StatusCode, Json<SourceRow>)> {
    s.require(&headers)?;
    src.validate().map_err(|e| ApiError::BadRequest(e.to_string()))?;
    blocking(move || {
        let row = SourceRow {
            source_id: src.source_id,
            kind: src.kind.as_str().to_string(),
            endpoint: src.endpoint,
            poll_interval: if src.kind == SourceType::Feed { src.poll_interval } else { 0 },
            enabled: src.enabled,
        };
        s.ctx.store.upsert_source(&row)?;
        Ok((StatusCode::CREATED, Json(row)))
    })
    .await
}

async fn retrain(
    State(s): State<ApiState>,
    headers: HeaderMap,
    Json(req): Json<RetrainRequest>,
) -> ApiResult<Response> {
    s.require(&headers)?;
    blocking(move || Ok(Json(s.ctx.retrain(&req.lang)?).into_response())).await
}

async fn export(State(s): State<ApiState>, headers: HeaderMap, Query(q): Query<QueryParams>) -> ApiResult<Response> {
    s.check(&headers)?;
    let filters = q.filters()?;
    let body = blocking(move || Ok(s.ctx.store.export_jsonl(&filters)?)).await?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

pub fn router(state: ApiState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/mentions", get(mentions))
        .route("/mentions/spread", get(top_spread))
        .route("/mentions/{id}/polarity", patch(patch_polarity))
        .route("/aggregates", get(aggregates))
        .route("/authors/top", get(top_authors))
        .route("/taxonomy", get(get_taxonomy).put(put_taxonomy))
        .route("/sources", get(list_sources).post(post_source))
        .route("/admin/retrain", post(retrain))
        .route("/export", get(export))
        .with_state(state)
}

/// Serves until `shutdown` resolves, rebuilding the aggregate view every
/// refresh period.
pub async fn serve_until(
    ctx: Arc<MonitorContext>,
    config: &ApiConfig,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), ApiError> {
    let token = config.effective_token().ok_or(ApiError::NoToken)?;
    let listener = tokio::net::TcpListener::bind(config.bind).await.map_err(|source| ApiError::Bind {
        addr: config.bind.to_string(),
        source,
    })?;
    ctx.store.refresh_view(Utc::now())?;
    let stop = Arc::new(AtomicBool::new(false));
    let refresher = spawn_view_refresher(
        ctx.store.clone(),
        std::time::Duration::from_secs(config.refresh_period),
        stop.clone(),
    );
    tracing::info!(addr = %config.bind, "serving");
    let app = router(ApiState::new(ctx, Some(token)));
    let served = axum::serve(listener, app).with_graceful_shutdown(shutdown).await;
    stop.store(true, Ordering::Relaxed);
    let _ = refresher.join();
    served.map_err(|e| ApiError::Internal(e.to_string()))
}

/// Serves until interrupted.
pub async fn serve(ctx: Arc<MonitorContext>, config: &ApiConfig) -> Result<(), ApiError> {
    serve_until(ctx, config, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
