//! Read-only JSON service over a loaded workspace.
//!
//! Everything is loaded at startup; handlers share an immutable state and
//! never touch the workspace directory.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use gridrisk_core::risk::{RiskMatrices, SurvivalFactors};
use gridrisk_core::Error;

use crate::query::{self, NetworkSummary, OptimizeRequest, RiskRequest, SensitivityRequest};
use crate::workspace::{Manifest, Workspace};
use crate::AppError;

pub struct ServiceState {
    pub network: NetworkSummary,
    pub manifest: Manifest,
    pub factors: Option<Arc<SurvivalFactors>>,
    pub truncated: usize,
}

impl ServiceState {
    /// Loads network, samples and factor matrices. The matrix cache is read
    /// if fresh but never written.
    pub fn load(ws: &Workspace) -> Result<Self, AppError> {
        let loaded = ws.load()?;
        let set = ws.samples(&loaded)?;
        let (factors, truncated) = match &set {
            Some(s) => (Some(ws.factors(&loaded, s, false)?), s.truncated()),
            None => (None, 0),
        };
        Ok(Self { network: query::network_summary(&loaded.network), manifest: ws.manifest()?, factors, truncated })
    }

    fn factors(&self) -> Result<&Arc<SurvivalFactors>, AppError> {
        self.factors.as_ref().ok_or(AppError::NoSamples)
    }
}

pub struct ApiError(AppError);

impl From<AppError> for ApiError {
    fn from(e: AppError) -> Self {
        ApiError(e)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e.into())
    }
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match &self.0 {
            AppError::NoSamples | AppError::Stale(_) => StatusCode::CONFLICT,
            AppError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            AppError::Core(Error::Refused { .. }) => StatusCode::UNPROCESSABLE_ENTITY,
            e if e.exit_code() == crate::EXIT_VALIDATION || e.exit_code() == crate::EXIT_USAGE => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(self.0.to_json())).into_response()
    }
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload.map(|Json(v)| v).map_err(|e| ApiError(AppError::Usage(e.body_text())))
}

type Shared = Arc<ServiceState>;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/api/network", get(network))
        .route("/api/stats", get(stats))
        .route("/api/risk", post(risk))
        .route("/api/sensitivity", post(sensitivity))
        .route("/api/optimize", post(optimize))
        .with_state(state)
}

async fn network(State(s): State<Shared>) -> Json<NetworkSummary> {
    Json(s.network.clone())
}

#[derive(Deserialize)]
pub struct StatsQuery {
    #[serde(default)]
    pub y0: f64,
}

#[derive(Serialize, Deserialize, Debug, PartialEq)]
pub struct Stats {
    pub n: u64,
    pub y0: f64,
    pub baseline_risk: Option<f64>,
    pub samples_with_loss: u64,
    pub truncated: u64,
    pub manifest: Manifest,
}

async fn stats(State(s): State<Shared>, Query(q): Query<StatsQuery>) -> Result<Json<Stats>, ApiError> {
    query::check_y0(q.y0)?;
    let (n, baseline_risk, with_loss) = match &s.factors {
        Some(f) => {
            let m = RiskMatrices::new(f.clone(), q.y0);
            (m.n() as u64, Some(m.estimate_risk()), m.support().len() as u64)
        }
        None => (0, None, 0),
    };
    Ok(Json(Stats {
        n,
        y0: q.y0,
        baseline_risk,
        samples_with_loss: with_loss,
        truncated: s.truncated as u64,
        manifest: s.manifest.clone(),
    }))
}

async fn blocking<T, F>(f: F) -> Result<Json<T>, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, AppError> + Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => Ok(Json(r?)),
        Err(e) => Err(ApiError(AppError::Io(std::io::Error::other(e.to_string())))),
    }
}

async fn risk(State(s): State<Shared>, payload: Result<Json<RiskRequest>, JsonRejection>) -> Response {
    let run = || -> Result<_, ApiError> {
        let req = body(payload)?;
        let f = s.factors()?.clone();
        Ok((req, f))
    };
    match run() {
        Ok((req, f)) => blocking(move || query::risk(&f, &req)).await.into_response(),
        Err(e) => e.into_response(),
    }
}

async fn sensitivity(State(s): State<Shared>, payload: Result<Json<SensitivityRequest>, JsonRejection>) -> Response {
    let run = || -> Result<_, ApiError> {
        let req = body(payload)?;
        query::check_y0(req.y0)?;
        Ok((req, s.factors()?.clone()))
    };
    match run() {
        Ok((req, f)) => blocking(move || Ok(query::sensitivity(&f, &req))).await.into_response(),
        Err(e) => e.into_response(),
    }
}

async fn optimize(State(s): State<Shared>, payload: Result<Json<OptimizeRequest>, JsonRejection>) -> Response {
    let run = || -> Result<_, ApiError> { Ok((body(payload)?, s.factors()?.clone())) };
    match run() {
        Ok((req, f)) => blocking(move || query::optimize(&f, &req)).await.into_response(),
        Err(e) => e.into_response(),
    }
}

pub async fn serve(state: ServiceState, port: u16) -> Result<(), AppError> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
