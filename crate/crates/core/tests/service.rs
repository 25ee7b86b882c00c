mod common;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use sketchscene::imaging::{ColorImage, EdgeImage};
use sketchscene::scene::CategorySets;
use sketchscene::service::{router, AppState};
use tower::ServiceExt;

async fn call(state: &AppState, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value, Option<String>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or(Body::empty(), |b| Body::from(b.to_string())))
        .unwrap();
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let retry = resp.headers().get("retry-after").map(|v| v.to_str().unwrap().to_string());
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null), retry)
}

fn state() -> AppState {
    AppState::new(common::tiny_bundle(3), 4)
}

fn sketch_b64(size: usize) -> String {
    let s = EdgeImage::from_fn(size, |x, y| if (x + y) % 9 == 0 { -1.0 } else { 1.0 });
    B64.encode(s.to_png_bytes().unwrap())
}

fn scene_body(seed: Option<u64>) -> Value {
    let mut v = json!({
        "canvas_size": 128,
        "strokes": [
            {"points": [[10.0, 10.0], [50.0, 10.0], [50.0, 50.0], [10.0, 50.0]], "category": "circle"},
            {"points": [[80.0, 70.0], [120.0, 110.0], [80.0, 110.0]], "category": "triangle"},
            {"points": [[0.0, 120.0], [127.0, 120.0]], "category": "stripes"}
        ]
    });
    if let Some(s) = seed {
        v["seed"] = json!(s);
    }
    v
}

#[tokio::test]
async fn healthz_reflects_model_state() {
    assert_eq!(call(&state(), "GET", "/healthz", None).await.0, StatusCode::OK);
    let empty = AppState::unloaded(CategorySets { foreground: vec![], background: vec![] });
    assert_eq!(call(&empty, "GET", "/healthz", None).await.0, StatusCode::SERVICE_UNAVAILABLE);
}

#[tokio::test]
async fn categories_echo_the_loaded_models() {
    let s = state();
    let (status, body, _) = call(&s, "GET", "/categories", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!({"foreground": ["circle", "triangle"], "background": ["stripes"]}));
    assert_eq!(call(&s, "GET", "/categories", None).await.1, body);
}

#[tokio::test]
async fn object_generation_is_repeatable() {
    let s = state();
    let req = json!({"sketch": sketch_b64(64), "category": "triangle"});
    let (a, first, _) = call(&s, "POST", "/generate/object", Some(req.clone())).await;
    let (_, second, _) = call(&s, "POST", "/generate/object", Some(req)).await;
    assert_eq!(a, StatusCode::OK);
    assert_eq!(first["image"], second["image"]);
    let png = B64.decode(first["image"].as_str().unwrap()).unwrap();
    let img = ColorImage::from_png_bytes(&png).unwrap();
    assert_eq!((img.width(), img.height()), (64, 64));
}

#[tokio::test]
async fn unknown_category_lists_valid_ones() {
    let (status, body, _) = call(
        &state(),
        "POST",
        "/generate/object",
        Some(json!({"sketch": sketch_b64(64), "category": "dragon"})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["valid_categories"], json!(["circle", "triangle"]));
    assert!(body["error"].as_str().unwrap().contains("dragon"));
}

#[tokio::test]
async fn tiny_sketch_is_resized() {
    let (status, _, _) = call(&state(), "POST", "/generate/object", Some(json!({"sketch": sketch_b64(1), "category": "circle"}))).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn missing_models_answer_503() {
    let s = AppState::unloaded(CategorySets {
        foreground: vec!["circle".into()],
        background: vec!["stripes".into()],
    });
    let obj = call(&s, "POST", "/generate/object", Some(json!({"sketch": sketch_b64(64), "category": "circle"}))).await;
    assert_eq!(obj.0, StatusCode::SERVICE_UNAVAILABLE);
    let scene = call(&s, "POST", "/generate/scene", Some(json!({"canvas_size": 64, "strokes": []}))).await;
    assert_eq!(scene.0, StatusCode::SERVICE_UNAVAILABLE);
}

#[tokio::test]
async fn bad_payloads_are_400() {
    let s = state();
    let cases = [
        ("/generate/object", json!({"sketch": "%%%", "category": "circle"})),
        ("/generate/object", json!({"sketch": B64.encode(b"not a png"), "category": "circle"})),
        ("/generate/object", json!({"category": "circle"})),
        ("/generate/scene", json!({"canvas_size": 64, "strokes": [{"points": [[70.0, 1.0]], "category": "circle"}]})),
        ("/generate/scene", json!({"canvas_size": 64, "strokes": [{"points": [[1.0, 1.0]], "category": "dragon"}]})),
        ("/generate/scene", json!({"canvas_size": 64, "strokes": "nope"})),
        ("/generate/scene", json!({"canvas_size": 0, "strokes": []})),
    ];
    for (uri, body) in cases {
        let (status, resp, _) = call(&s, "POST", uri, Some(body.clone())).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{uri} {body} -> {resp}");
        assert!(resp["error"].is_string());
    }
}

#[tokio::test]
async fn scene_replay_is_deterministic() {
    let s = state();
    let (status, a, _) = call(&s, "POST", "/generate/scene", Some(scene_body(Some(42)))).await;
    assert_eq!(status, StatusCode::OK, "{a}");
    let (_, b, _) = call(&s, "POST", "/generate/scene", Some(scene_body(Some(42)))).await;
    for key in ["image", "foreground_canvas", "patches", "paste_order", "seed"] {
        assert_eq!(a[key], b[key], "{key}");
    }
    assert_eq!(a["seed"], 42);
    assert_eq!(a["patches"].as_array().unwrap().len(), 2);
    for p in a["patches"].as_array().unwrap() {
        let b = &p["bbox"];
        assert!(b["x2"].as_u64().unwrap() <= 128 && b["y2"].as_u64().unwrap() <= 128);
    }
    let png = B64.decode(a["image"].as_str().unwrap()).unwrap();
    assert_eq!(ColorImage::from_png_bytes(&png).unwrap().width(), 128);
}

#[tokio::test]
async fn omitted_seed_is_chosen_and_echoed() {
    let s = state();
    let (status, a, _) = call(&s, "POST", "/generate/scene", Some(scene_body(None))).await;
    assert_eq!(status, StatusCode::OK);
    let seed = a["seed"].as_u64().expect("seed echoed");
    let (_, b, _) = call(&s, "POST", "/generate/scene", Some(scene_body(Some(seed)))).await;
    assert_eq!(a["image"], b["image"]);
}

#[tokio::test]
async fn empty_stroke_list_is_valid() {
    let (status, body, _) = call(&state(), "POST", "/generate/scene", Some(json!({"canvas_size": 64, "strokes": []}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["patches"], json!([]));
}

#[tokio::test]
async fn overload_is_429_with_retry_hint() {
    let s = state();
    let held = s.limiter().clone().acquire_many_owned(4).await.unwrap();
    let (status, _, retry) = call(&s, "POST", "/generate/scene", Some(scene_body(Some(1)))).await;
    assert_eq!(status, StatusCode::TOO_MANY_REQUESTS);
    assert!(retry.is_some());
    drop(held);
    assert_eq!(call(&s, "POST", "/generate/scene", Some(scene_body(Some(1)))).await.0, StatusCode::OK);
}
