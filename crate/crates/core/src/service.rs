//! JSON-over-HTTP front end for object and scene generation.
//!
//! Images travel as base64-encoded PNG. Inference runs on the blocking pool;
//! `tch` tensors are not `Sync`, so the bundle sits behind a mutex and the
//! semaphore bounds how many requests may queue for it.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Semaphore;

use crate::imaging::{BBox, EdgeImage};
use crate::scene::{generate_scene, segment_scene, CategorySets, ModelBundle, SceneSketch, SegmentMode, Stroke};
use crate::Error;

pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;
pub const MAX_CANVAS: usize = 1024;

#[derive(Clone)]
pub struct AppState {
    bundle: Option<Arc<Mutex<ModelBundle>>>,
    categories: CategorySets,
    limit: Arc<Semaphore>,
}

impl AppState {
    pub fn new(bundle: ModelBundle, max_in_flight: usize) -> Self {
        AppState {
            categories: bundle.categories(),
            bundle: Some(Arc::new(Mutex::new(bundle))),
            limit: Arc::new(Semaphore::new(max_in_flight.max(1))),
        }
    }

    /// The in-flight limiter. Permits held here are unavailable to requests.
    pub fn limiter(&self) -> &Arc<Semaphore> {
        &self.limit
    }

    /// A service with no models: generation endpoints answer 503.
    pub fn unloaded(categories: CategorySets) -> Self {
        AppState {
            bundle: None,
            categories,
            limit: Arc::new(Semaphore::new(DEFAULT_MAX_IN_FLIGHT)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateObjectRequest {
    /// Base64 PNG of the sketch; resized to the model resolution.
    pub sketch: String,
    pub category: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateObjectResponse {
    pub image: String,
    pub category: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateSceneRequest {
    pub strokes: Vec<Stroke>,
    pub canvas_size: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchOut {
    pub category: String,
    pub bbox: BBox,
    pub image: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub segmentation_ms: f64,
    pub generation_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateSceneResponse {
    pub image: String,
    pub foreground_canvas: String,
    pub patches: Vec<PatchOut>,
    pub paste_order: Vec<usize>,
    pub timings: Timings,
    pub seed: u64,
}

struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, msg: impl Into<String>) -> Self {
        ApiError {
            status,
            body: json!({ "error": msg.into() }),
        }
    }

    fn bad(msg: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, msg)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Input(_) | Error::Image(_) => StatusCode::BAD_REQUEST,
            Error::State(_) => StatusCode::SERVICE_UNAVAILABLE,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut resp = (self.status, Json(self.body)).into_response();
        if self.status == StatusCode::TOO_MANY_REQUESTS {
            resp.headers_mut().insert(header::RETRY_AFTER, header::HeaderValue::from_static("1"));
        }
        resp
    }
}

fn parse<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad(format!("malformed request: {e}")))
}

fn encode_png(bytes: Vec<u8>) -> String {
    B64.encode(bytes)
}

async fn healthz(State(s): State<AppState>) -> Response {
    if s.bundle.is_some() {
        (StatusCode::OK, Json(json!({ "status": "ok" }))).into_response()
    } else {
        ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "models not loaded").into_response()
    }
}

async fn categories(State(s): State<AppState>) -> Json<CategorySets> {
    Json(s.categories.clone())
}

/// Runs `f` on the blocking pool with the bundle, under the in-flight limit.
async fn with_bundle<T: Send + 'static>(
    s: &AppState,
    f: impl FnOnce(&ModelBundle) -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    let Some(bundle) = s.bundle.clone() else {
        return Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "models not loaded"));
    };
    let permit = s
        .limit
        .clone()
        .try_acquire_owned()
        .map_err(|_| ApiError::new(StatusCode::TOO_MANY_REQUESTS, "too many requests in flight; retry shortly"))?;
    let out = tokio::task::spawn_blocking(move || {
        let _permit = permit;
        let guard = bundle.lock().unwrap_or_else(|p| p.into_inner());
        f(&guard)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("worker failed: {e}")))?;
    out
}

async fn generate_object(State(s): State<AppState>, body: Bytes) -> Result<Json<GenerateObjectResponse>, ApiError> {
    let req: GenerateObjectRequest = parse(&body)?;
    if !s.categories.foreground.contains(&req.category) {
        return Err(ApiError {
            status: StatusCode::BAD_REQUEST,
            body: json!({
                "error": format!("unknown category {:?}", req.category),
                "valid_categories": s.categories.foreground,
            }),
        });
    }
    let png = B64
        .decode(req.sketch.as_bytes())
        .map_err(|e| ApiError::bad(format!("sketch is not base64: {e}")))?;
    let sketch = EdgeImage::from_png_bytes(&png).map_err(|e| ApiError::bad(format!("sketch is not a PNG: {e}")))?;
    let category = req.category.clone();
    let image = with_bundle(&s, move |b| {
        let c = b.object.category_index(&category).ok_or_else(|| ApiError::bad("category not in model"))?;
        let sketch = sketch.resize(b.object.resolution());
        Ok(b.object.infer_object(&sketch, c)?.to_png_bytes()?)
    })
    .await?;
    Ok(Json(GenerateObjectResponse {
        image: encode_png(image),
        category: req.category,
    }))
}

async fn generate_scene_handler(State(s): State<AppState>, body: Bytes) -> Result<Json<GenerateSceneResponse>, ApiError> {
    let req: GenerateSceneRequest = parse(&body)?;
    if req.canvas_size == 0 || req.canvas_size > MAX_CANVAS {
        return Err(ApiError::bad(format!("canvas_size must be in 1..={MAX_CANVAS}")));
    }
    let seed = req.seed.unwrap_or_else(|| rand::random::<u32>() as u64);
    let cats = s.categories.clone();
    let t0 = Instant::now();
    let sketch = SceneSketch::from_strokes(req.canvas_size, req.strokes)?;
    let seg = segment_scene(&sketch, SegmentMode::LabeledStrokes, &cats)?;
    let seg_ms = t0.elapsed().as_secs_f64() * 1e3;
    let (image, canvas, patches, order, gen_ms) = with_bundle(&s, move |b| {
        let t = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = generate_scene(&sketch, &seg, b, &mut rng)?;
        let patches = out
            .patches
            .iter()
            .map(|p| {
                Ok(PatchOut {
                    category: p.category.clone(),
                    bbox: p.bbox,
                    image: encode_png(p.image.to_png_bytes()?),
                })
            })
            .collect::<Result<Vec<_>, Error>>()?;
        Ok((
            out.image.to_png_bytes()?,
            out.foreground_canvas.to_png_bytes()?,
            patches,
            out.paste_order,
            t.elapsed().as_secs_f64() * 1e3,
        ))
    })
    .await?;
    Ok(Json(GenerateSceneResponse {
        image: encode_png(image),
        foreground_canvas: encode_png(canvas),
        patches,
        paste_order: order,
        timings: Timings {
            segmentation_ms: seg_ms,
            generation_ms: gen_ms,
            total_ms: t0.elapsed().as_secs_f64() * 1e3,
        },
        seed,
    }))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/categories", get(categories))
        .route("/generate/object", post(generate_object))
        .route("/generate/scene", post(generate_scene_handler))
        .with_state(state)
}

/// Serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
