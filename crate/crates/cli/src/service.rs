//! HTTP API over a store, backing the threshold-calibration UI.
//!
//! Rasters and zones are loaded once at startup and never change while the
//! service runs. Threshold updates go through one async mutex, which also
//! covers the atomic rewrite of `thresholds.json`.

use crate::render::{render_mask_png, render_preview_png, RenderError, Window};
use crate::store::{infer_sensor, RasterEntry, StoreLayout, ThresholdsDoc};
use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use greenzonal_core::ndvi::{self, NdviError};
use greenzonal_core::zonal::{zonal_vegetation, ThresholdTable, ZonalError};
use greenzonal_core::{RasterGrid, Sensor, ThresholdRecord, Zone};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::str::FromStr;
use std::sync::Arc;
use tokio::sync::Mutex;

/// Calibration grid step for stored thresholds.
pub const THRESHOLD_STEP: f64 = 0.05;

/// `t` snapped to the 0.05 grid, or `None` when it is off the grid.
pub fn snap_to_grid(t: f64) -> Option<f64> {
    let k = (t / THRESHOLD_STEP).round();
    ((t / THRESHOLD_STEP - k).abs() <= 1e-9).then(|| k / 20.0)
}

pub struct LoadedRaster {
    pub entry: RasterEntry,
    pub sensor: Sensor,
    pub grid: RasterGrid,
}

pub struct AppState {
    pub store: StoreLayout,
    pub zones: Vec<Zone>,
    pub rasters: BTreeMap<String, LoadedRaster>,
    pub thresholds: Mutex<ThresholdTable>,
}

impl AppState {
    pub fn load(store: StoreLayout) -> anyhow::Result<Self> {
        let zones = store.load_zones()?;
        let mut rasters = BTreeMap::new();
        for entry in store.load_index()?.rasters {
            let grid = store.load_raster(&entry)?;
            let sensor = entry.sensor.unwrap_or_else(|| infer_sensor(&grid));
            rasters.insert(entry.id.clone(), LoadedRaster { entry, sensor, grid });
        }
        let thresholds = store.load_thresholds()?.to_table();
        Ok(AppState {
            store,
            zones,
            rasters,
            thresholds: Mutex::new(thresholds),
        })
    }

    fn zone(&self, id: &str) -> Result<&Zone, ApiError> {
        self.zones
            .iter()
            .find(|z| z.id == id)
            .ok_or_else(|| ApiError::not_found(format!("no zone {id:?}")))
    }

    fn raster(&self, id: &str) -> Result<&LoadedRaster, ApiError> {
        self.rasters
            .get(id)
            .ok_or_else(|| ApiError::not_found(format!("no raster {id:?}")))
    }
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn bad_request(m: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            message: m.into(),
        }
    }

    fn not_found(m: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::NOT_FOUND,
            message: m.into(),
        }
    }

    fn conflict(m: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::CONFLICT,
            message: m.into(),
        }
    }
}

impl From<ZonalError> for ApiError {
    fn from(e: ZonalError) -> Self {
        match e {
            ZonalError::ZoneOutside(_) | ZonalError::NoPixels(_) => ApiError::conflict(e.to_string()),
            ZonalError::Ndvi(NdviError::ThresholdRange(_) | NdviError::InvalidSweep(_)) => {
                ApiError::bad_request(e.to_string())
            }
            other => ApiError::conflict(other.to_string()),
        }
    }
}

impl From<RenderError> for ApiError {
    fn from(e: RenderError) -> Self {
        match e {
            RenderError::Png(_) => ApiError {
                status: StatusCode::INTERNAL_SERVER_ERROR,
                message: e.to_string(),
            },
            _ => ApiError::bad_request(e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type Params = Query<HashMap<String, String>>;

fn param<T: FromStr>(q: &HashMap<String, String>, name: &str) -> Result<Option<T>, ApiError> {
    match q.get(name).map(|s| s.trim()).filter(|s| !s.is_empty()) {
        None => Ok(None),
        Some(s) => s
            .parse()
            .map(Some)
            .map_err(|_| ApiError::bad_request(format!("invalid {name}: {s:?}"))),
    }
}

fn required<T: FromStr>(q: &HashMap<String, String>, name: &str) -> Result<T, ApiError> {
    param(q, name)?.ok_or_else(|| ApiError::bad_request(format!("missing query parameter {name}")))
}


#[derive(Serialize)]
struct ZoneSummary {
    id: String,
    name: String,
    /// `[min_x, min_y, max_x, max_y]`
    bbox: [f64; 4],
}

async fn list_zones(State(s): State<Arc<AppState>>) -> Json<Vec<ZoneSummary>> {
    Json(
        s.zones
            .iter()
            .map(|z| {
                let b = z.bbox();
                ZoneSummary {
                    id: z.id.clone(),
                    name: z.name.clone(),
                    bbox: [b.min_x, b.min_y, b.max_x, b.max_y],
                }
            })
            .collect(),
    )
}

#[derive(Serialize)]
struct RasterSummary {
    id: String,
    sensor: Sensor,
    crs: &'static str,
    width: usize,
    height: usize,
    pixel_size: f64,
    /// `[min_x, min_y, max_x, max_y]`
    extent: [f64; 4],
}

async fn list_rasters(State(s): State<Arc<AppState>>) -> Json<Vec<RasterSummary>> {
    Json(
        s.rasters
            .values()
            .map(|r| {
                let (x0, y0, x1, y1) = r.grid.extent();
                RasterSummary {
                    id: r.entry.id.clone(),
                    sensor: r.sensor,
                    crs: r.grid.crs.name(),
                    width: r.grid.width,
                    height: r.grid.height,
                    pixel_size: r.grid.transform.pixel_width,
                    extent: [x0, y0, x1, y1],
                }
            })
            .collect(),
    )
}

async fn zone_stats(
    State(s): State<Arc<AppState>>,
    Path(zone_id): Path<String>,
    Query(q): Params,
) -> Result<Response, ApiError> {
    let zone = s.zone(&zone_id)?;
    let raster_id: String = required(&q, "raster")?;
    let raster = s.raster(&raster_id)?;
    let threshold = match param::<f64>(&q, "threshold")? {
        Some(t) => t,
        None => s.thresholds.lock().await.resolve(&zone.id, raster.sensor),
    };
    let result = zonal_vegetation(&raster.grid, zone, threshold)?.with_raster_id(raster_id);
    Ok(Json(result).into_response())
}

#[derive(Serialize)]
struct SweepResponse {
    zone_id: String,
    raster_id: String,
    sensor: Sensor,
    points: Vec<ndvi::SweepPoint>,
}

async fn zone_sweep(
    State(s): State<Arc<AppState>>,
    Path(zone_id): Path<String>,
    Query(q): Params,
) -> Result<Json<SweepResponse>, ApiError> {
    let zone = s.zone(&zone_id)?;
    let raster_id: String = required(&q, "raster")?;
    let raster = s.raster(&raster_id)?;
    let (lo, hi) = raster.sensor.sweep_range();
    let from = param(&q, "from")?.unwrap_or(lo);
    let to = param(&q, "to")?.unwrap_or(hi);
    let step = param(&q, "step")?.unwrap_or(THRESHOLD_STEP);
    let series = ndvi::sweep(&raster.grid, zone, from, to, step)?;
    Ok(Json(SweepResponse {
        zone_id,
        raster_id,
        sensor: raster.sensor,
        points: series.points,
    }))
}

fn png_response(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

async fn raster_preview(
    State(s): State<Arc<AppState>>,
    Path(raster_id): Path<String>,
    Query(q): Params,
) -> Result<Response, ApiError> {
    let raster = s.raster(&raster_id)?;
    let window = param(&q, "window")?.unwrap_or_else(|| Window::full(&raster.grid));
    Ok(png_response(render_preview_png(&raster.grid, window)?))
}

async fn raster_mask(
    State(s): State<Arc<AppState>>,
    Path(raster_id): Path<String>,
    Query(q): Params,
) -> Result<Response, ApiError> {
    let raster = s.raster(&raster_id)?;
    let zone = match param::<String>(&q, "zone")? {
        Some(id) => Some(s.zone(&id)?),
        None => None,
    };
    let threshold = match (param::<f64>(&q, "threshold")?, zone) {
        (Some(t), _) => t,
        (None, Some(z)) => s.thresholds.lock().await.resolve(&z.id, raster.sensor),
        (None, None) => raster.sensor.default_threshold(),
    };
    let window = param(&q, "window")?.unwrap_or_else(|| Window::full(&raster.grid));
    Ok(png_response(render_mask_png(&raster.grid, zone, threshold, window)?))
}

async fn get_thresholds(State(s): State<Arc<AppState>>) -> Json<ThresholdsDoc> {
    Json(ThresholdsDoc::from_table(&*s.thresholds.lock().await))
}

#[derive(Deserialize)]
struct PutThreshold {
    sensor: Sensor,
    threshold: f64,
}

async fn put_threshold(
    State(s): State<Arc<AppState>>,
    Path(zone_id): Path<String>,
    body: Bytes,
) -> Result<Json<ThresholdRecord>, ApiError> {
    s.zone(&zone_id)?;
    let req: PutThreshold =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("invalid body: {e}")))?;
    if !(-1.0..=1.0).contains(&req.threshold) {
        return Err(ApiError::bad_request(format!("threshold {} outside [-1, 1]", req.threshold)));
    }
    let threshold = snap_to_grid(req.threshold)
        .ok_or_else(|| ApiError::bad_request(format!("threshold {} is not on the 0.05 grid", req.threshold)))?;
    let record = ThresholdRecord {
        zone_id,
        sensor: req.sensor,
        threshold,
    };
    let mut table = s.thresholds.lock().await;
    let mut next = table.clone();
    next.insert(record.clone());
    s.store.save_thresholds(&ThresholdsDoc::from_table(&next)).map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        message: e.to_string(),
    })?;
    *table = next;
    log::info!("threshold {} {} = {}", record.zone_id, record.sensor, record.threshold);
    Ok(Json(record))
}

async fn not_found() -> ApiError {
    ApiError::not_found("no such endpoint")
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/zones", get(list_zones))
        .route("/api/rasters", get(list_rasters))
        .route("/api/zones/{id}/stats", get(zone_stats))
        .route("/api/zones/{id}/sweep", get(zone_sweep))
        .route("/api/rasters/{id}/preview.png", get(raster_preview))
        .route("/api/rasters/{id}/mask.png", get(raster_mask))
        .route("/api/thresholds", get(get_thresholds))
        .route("/api/thresholds/{zone_id}", axum::routing::put(put_threshold))
        .fallback(not_found)
        .with_state(state)
}

/// Binds `addr`, announces the bound address on stdout and serves until
/// interrupted.
pub async fn serve(state: AppState, addr: std::net::SocketAddr, quiet: bool) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let bound = listener.local_addr()?;
    if !quiet {
        use std::io::Write;
        let mut out = std::io::stdout().lock();
        writeln!(out, "listening on http://{bound}")?;
        out.flush()?;
    }
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
