mod common;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use common::{app, call, create, get, post_gaze, post_json, wait_result};
use glanceseg::synth::{generate, SynthImage, SynthSpec};
use glanceseg::{io, GazeSample};
use glanceseg_cli::service::{AppState, ServiceOptions};
use serde_json::json;

fn image(seed: u64) -> (SynthImage, Vec<u8>) {
    let img = generate(&SynthSpec {
        seed,
        image_dims: (256, 256),
        n_lesions: 2,
        vessel_count: 3,
        ..Default::default()
    })
    .unwrap();
    let png = io::encode_png_frame(&img.frame).unwrap();
    (img, png)
}

/// `n` samples in a small circle around the first lesion.
fn fixation(img: &SynthImage, n: usize) -> Vec<GazeSample> {
    let c = img.lesions[0].center;
    (0..n)
        .map(|k| {
            let a = k as f64 * 0.7;
            GazeSample::new(k as f64 * 16.7, c.0 + 3.0 * a.cos(), c.1 + 3.0 * a.sin())
        })
        .collect()
}

#[tokio::test]
async fn gaze_over_lesion_publishes_masks() {
    let (app, _) = app(10, ServiceOptions::default());
    let (img, png) = image(1);
    let id = create(&app, &png).await;

    let (status, info) = call(&app, get(&format!("/session/{id}"))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(info["width"], 256);
    assert_eq!(info["status"], "idle");
    let (status, _) = call(&app, get(&format!("/session/{id}/result"))).await;
    assert_eq!(status, StatusCode::NO_CONTENT);

    let (status, body) = post_gaze(&app, &id, &fixation(&img, 50)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["accepted_count"], 50);
    assert_eq!(body["version"], 0);

    let result = wait_result(&app, &id, 0).await;
    assert_eq!(result["version"], 1);
    assert_eq!(result["trace_len"], 50);
    let masks = result["masks"].as_array().unwrap();
    assert!(!masks.is_empty(), "{result}");
    assert!(B64.decode(result["overlay_png_base64"].as_str().unwrap()).is_ok());
    let lesion = img.lesions[0].center;
    let hit = masks.iter().any(|m| {
        let b: Vec<f64> = m["bbox"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        lesion.0 >= b[0] && lesion.0 < b[0] + b[2] && lesion.1 >= b[1] && lesion.1 < b[1] + b[3]
    });
    assert!(hit, "no mask over the lesion: {masks:?}");

    // nothing newer yet
    let (status, _) = call(&app, get(&format!("/session/{id}/result?since=1"))).await;
    assert_eq!(status, StatusCode::NO_CONTENT);

    // a second batch bumps the version again
    let (_, body) = post_gaze(&app, &id, &fixation(&img, 10)).await;
    assert_eq!(body["version"], 1);
    let second = wait_result(&app, &id, 1).await;
    assert_eq!(second["version"], 2);
    assert_eq!(second["trace_len"], 60);
}

#[tokio::test]
async fn out_of_bounds_sample_rejected_with_index() {
    let (app, _) = app(10, ServiceOptions::default());
    let (_, png) = image(2);
    let id = create(&app, &png).await;
    let mut samples: Vec<GazeSample> = (0..5).map(|k| GazeSample::new(k as f64, 10.0, 10.0)).collect();
    samples[3].x = 256.0;
    let (status, body) = post_gaze(&app, &id, &samples).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["index"], 3);
    // an invalid sample may lie anywhere
    samples[3].valid = false;
    let (status, body) = post_gaze(&app, &id, &samples).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["accepted_count"], 4);
}

#[tokio::test]
async fn sessions_are_isolated() {
    let (app, _) = app(10, ServiceOptions::default());
    let (img, png) = image(3);
    let a = create(&app, &png).await;
    let b = create(&app, &png).await;
    assert_ne!(a, b);
    post_gaze(&app, &a, &fixation(&img, 30)).await;
    wait_result(&app, &a, 0).await;
    let (_, info) = call(&app, get(&format!("/session/{b}"))).await;
    assert_eq!(info["samples"], 0);
    assert_eq!(info["version"], 0);
    let (status, _) = call(&app, get(&format!("/session/{b}/result"))).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
}

#[tokio::test]
async fn finalize_conflicts_while_processing() {
    let (app, _) = app(400, ServiceOptions::default());
    let (img, png) = image(4);
    let id = create(&app, &png).await;
    post_gaze(&app, &id, &fixation(&img, 20)).await;
    let (status, _) = call(&app, post_json(&format!("/session/{id}/finalize"), &json!({}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    wait_result(&app, &id, 0).await;
    let (status, body) = call(&app, post_json(&format!("/session/{id}/finalize"), &json!({}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["annotation"]["samples"], 20);
}

#[tokio::test]
async fn verdicts_shape_the_final_mask() {
    let (app, _) = app(10, ServiceOptions::default());
    let (img, png) = image(1);
    let id = create(&app, &png).await;
    post_gaze(&app, &id, &fixation(&img, 50)).await;
    let result = wait_result(&app, &id, 0).await;
    let n = result["masks"].as_array().unwrap().len();
    assert!(n > 0);

    let (status, _) = call(&app, post_json(&format!("/session/{id}/mask/{n}/verdict"), &json!({"verdict": "accept"}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    for k in 0..n {
        let (status, body) =
            call(&app, post_json(&format!("/session/{id}/mask/{k}/verdict"), &json!({"verdict": "reject"}))).await;
        assert_eq!(status, StatusCode::OK, "{body}");
    }
    let (_, after) = call(&app, get(&format!("/session/{id}/result"))).await;
    assert!(after["masks"].as_array().unwrap().iter().all(|m| m["verdict"] == "reject"));

    let (_, fin) = call(&app, post_json(&format!("/session/{id}/finalize"), &json!({}))).await;
    let png = B64.decode(fin["mask_png_base64"].as_str().unwrap()).unwrap();
    let mask = io::decode_png_mask(&png).unwrap();
    assert_eq!(mask.dims(), (256, 256));
    assert!(mask.is_empty());
    let listed = fin["annotation"]["masks"].as_array().unwrap();
    assert_eq!(listed.len(), n);
    assert!(listed.iter().all(|m| m["included"] == false));
}

#[tokio::test]
async fn unknown_session_and_bad_upload() {
    let (app, _) = app(10, ServiceOptions::default());
    let (status, _) = call(&app, get("/session/nope")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, common::upload(b"not a png")).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let req = Request::post("/session")
        .header("content-type", "multipart/form-data; boundary=x")
        .body(Body::from("--x--\r\n"))
        .unwrap();
    let (status, _) = call(&app, req).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn delete_removes_session() {
    let (app, _) = app(10, ServiceOptions::default());
    let (_, png) = image(5);
    let id = create(&app, &png).await;
    let req = Request::delete(format!("/session/{id}")).body(Body::empty()).unwrap();
    let (status, _) = call(&app, req).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (status, _) = call(&app, get(&format!("/session/{id}"))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn journal_restores_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let opts = ServiceOptions {
        journal: Some(dir.path().to_path_buf()),
    };
    let (img, png) = image(1);
    let (app1, _) = app(10, opts.clone());
    let id = create(&app1, &png).await;
    post_gaze(&app1, &id, &fixation(&img, 50)).await;
    let first = wait_result(&app1, &id, 0).await;
    call(&app1, post_json(&format!("/session/{id}/mask/0/verdict"), &json!({"verdict": "accept"}))).await;

    let state = AppState::new(common::pipeline(10), opts);
    assert_eq!(state.restore().unwrap(), 1);
    let app2 = glanceseg_cli::service::router(state);
    let restored = wait_result(&app2, &id, 0).await;
    assert_eq!(restored["trace_len"], 50);
    let rle = |v: &serde_json::Value| -> Vec<serde_json::Value> {
        v["masks"].as_array().unwrap().iter().map(|m| m["rle_counts"].clone()).collect()
    };
    assert_eq!(rle(&restored), rle(&first));
}
