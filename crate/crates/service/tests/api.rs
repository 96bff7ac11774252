use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use embedscope_service::router;

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn create(app: &Router, body: Value) -> Value {
    let (status, v) = call(app, Method::POST, "/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v
}

async fn state(app: &Router, id: &str) -> Value {
    let (status, v) = call(app, Method::GET, &format!("/sessions/{id}/state"), None).await;
    assert_eq!(status, StatusCode::OK);
    v
}

async fn step(app: &Router, id: &str, n: u64) -> Value {
    let (status, v) = call(app, Method::POST, &format!("/sessions/{id}/step"), Some(json!({ "n": n }))).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    v
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

#[tokio::test]
async fn create_two_word_session() {
    let app = router();
    let s = create(&app, json!({ "corpus": "a b a b", "dim": 2, "mode": "cbow", "objective": "softmax" })).await;
    assert_eq!(s["vocab_size"], 2);
    assert_eq!(s["version"], 0);
    assert_eq!(s["words"], json!(["a", "b"]));
    for row in s["output"].as_array().unwrap() {
        assert!(floats(row).iter().all(|&x| x == 0.0));
    }
    for row in s["input"].as_array().unwrap() {
        assert!(floats(row).iter().all(|&x| x.abs() <= 0.25));
    }
}

#[tokio::test]
async fn create_rejects_bad_requests() {
    let app = router();
    for body in [
        json!({ "corpus": "a b a b", "dim": 0 }),
        json!({ "corpus": "a a a" }),
        json!({ "corpus": "", "dim": 2 }),
        json!({ "corpus": "a b a b", "eta": -1.0 }),
        json!({ "corpus": "a b a b", "objective": "ns", "negative": 0 }),
        json!({ "corpus": "a b a b", "objective": "ns", "negative": 2 }),
        json!({ "preset": "nope" }),
        json!({ "corpus": "a b", "mode": "lstm" }),
        json!({ "corpus": "a b", "dims": 3 }),
    ] {
        let (status, v) = call(&app, Method::POST, "/sessions", Some(body.clone())).await;
        assert!(status.is_client_error(), "{body} gave {status}");
        assert!(v["error"].is_string(), "{body}: {v}");
    }
    let req = Request::builder()
        .method(Method::POST)
        .uri("/sessions")
        .header("content-type", "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn same_seed_same_initial_snapshot() {
    let app = router();
    let body = json!({ "preset": "repeating", "dim": 4, "mode": "sg", "objective": "hs", "seed": 9 });
    let a = create(&app, body.clone()).await;
    let b = create(&app, body).await;
    assert_ne!(a["id"], b["id"]);
    assert_eq!(a["input"], b["input"]);
    assert_eq!(a["output"], b["output"]);
    assert_eq!(a["digest"], b["digest"]);
}

#[tokio::test]
async fn step_reports_mean_and_bumps_version() {
    let app = router();
    let s = create(&app, json!({ "preset": "repeating", "dim": 5, "objective": "ns", "negative": 3 })).await;
    let id = s["id"].as_str().unwrap();
    let r = step(&app, id, 500).await;
    assert_eq!(r["version"], 1);
    let losses = floats(&r["losses"]);
    assert_eq!(losses.len(), 500);
    let mean = losses.iter().sum::<f64>() / 500.0;
    assert!((r["mean_loss"].as_f64().unwrap() - mean).abs() < 1e-12);
    assert_eq!(r["instances_done"], 500);
    let snap = state(&app, id).await;
    assert_eq!(snap["version"], 1);
    assert_ne!(snap["digest"], s["digest"]);
}

#[tokio::test]
async fn steps_compose() {
    let app = router();
    let body = json!({ "preset": "repeating", "dim": 3, "mode": "sg", "objective": "ns", "negative": 2, "seed": 4 });
    let one = create(&app, body.clone()).await;
    let two = create(&app, body).await;
    let (a, b) = (one["id"].as_str().unwrap(), two["id"].as_str().unwrap());
    step(&app, a, 1).await;
    step(&app, a, 1).await;
    step(&app, b, 2).await;
    let (sa, sb) = (state(&app, a).await, state(&app, b).await);
    assert_eq!(sa["digest"], sb["digest"]);
    assert_eq!(sa["input"], sb["input"]);
    assert_eq!(sa["version"], 2);
    assert_eq!(sb["version"], 1);
}

#[tokio::test]
async fn bad_step_requests() {
    let app = router();
    let (status, v) = call(&app, Method::POST, "/sessions/s99/step", Some(json!({ "n": 1 }))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(v["error"].is_string());

    let s = create(&app, json!({ "corpus": "a b a b", "dim": 2 })).await;
    let id = s["id"].as_str().unwrap();
    let (status, _) = call(&app, Method::POST, &format!("/sessions/{id}/step"), Some(json!({ "n": 0 }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, Method::POST, &format!("/sessions/{id}/step"), Some(json!({ "n": -3 }))).await;
    assert!(status.is_client_error());

    let (status, _) = call(&app, Method::DELETE, &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (status, _) = call(&app, Method::POST, &format!("/sessions/{id}/step"), Some(json!({ "n": 1 }))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, Method::DELETE, &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    for uri in ["state", "pca", "neighbors?word=a"] {
        let (status, _) = call(&app, Method::GET, &format!("/sessions/{id}/{uri}"), None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
    }
}

#[tokio::test]
async fn activate_single_word_copies_row() {
    let app = router();
    let s = create(&app, json!({ "preset": "repeating", "dim": 4, "mode": "sg" })).await;
    let id = s["id"].as_str().unwrap();
    step(&app, id, 7).await;
    let before = state(&app, id).await;
    let (status, a) = call(&app, Method::POST, &format!("/sessions/{id}/activate"), Some(json!({ "ids": [3] }))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(a["hidden"], before["input"][3]);
    assert_eq!(a["words"], json!([before["words"][3]]));
    let y = floats(&a["outputs"]);
    assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let after = state(&app, id).await;
    assert_eq!(after["version"], before["version"]);
    assert_eq!(after["digest"], before["digest"]);
}

#[tokio::test]
async fn activate_hs_and_ns() {
    let app = router();
    let hs = create(&app, json!({ "preset": "repeating", "dim": 4, "objective": "hs" })).await;
    let id = hs["id"].as_str().unwrap();
    step(&app, id, 50).await;
    let (_, a) = call(&app, Method::POST, &format!("/sessions/{id}/activate"), Some(json!({ "ids": [0, 2] }))).await;
    let p = floats(&a["outputs"]);
    assert_eq!(p.len(), 8);
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    assert_eq!(floats(&a["inner"]).len(), 7);

    let ns = create(&app, json!({ "preset": "repeating", "dim": 4, "objective": "ns", "negative": 2 })).await;
    let id = ns["id"].as_str().unwrap();
    let (_, a) = call(&app, Method::POST, &format!("/sessions/{id}/activate"), Some(json!({ "ids": [1] }))).await;
    // zero output vectors: every sigmoid is one half
    assert!(floats(&a["outputs"]).iter().all(|&x| x == 0.5));
}

#[tokio::test]
async fn activate_rejects_bad_ids() {
    let app = router();
    let s = create(&app, json!({ "corpus": "a b a b", "dim": 2 })).await;
    let id = s["id"].as_str().unwrap();
    for ids in [json!([2]), json!([]), json!([0, 99])] {
        let (status, v) = call(&app, Method::POST, &format!("/sessions/{id}/activate"), Some(json!({ "ids": ids }))).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{ids}");
        assert!(v["error"].is_string());
    }
}

#[tokio::test]
async fn state_version_polling() {
    let app = router();
    let s = create(&app, json!({ "corpus": "a b a b", "dim": 2 })).await;
    let id = s["id"].as_str().unwrap();
    let (_, v) = call(&app, Method::GET, &format!("/sessions/{id}/state?version=0"), None).await;
    assert_eq!(v, json!({ "id": id, "version": 0, "unchanged": true }));
    step(&app, id, 1).await;
    let (_, v) = call(&app, Method::GET, &format!("/sessions/{id}/state?version=0"), None).await;
    assert_eq!(v["version"], 1);
    assert!(v["input"].is_array());
    let (status, _) = call(&app, Method::GET, &format!("/sessions/{id}/state?version=x"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn pca_in_native_dimension_preserves_distances() {
    let app = router();
    let s = create(&app, json!({ "preset": "repeating", "dim": 2, "objective": "ns", "negative": 2 })).await;
    let id = s["id"].as_str().unwrap();
    step(&app, id, 40).await;
    let snap = state(&app, id).await;
    let (status, p) = call(&app, Method::GET, &format!("/sessions/{id}/pca"), None).await;
    assert_eq!(status, StatusCode::OK);
    let raw: Vec<Vec<f64>> = snap["input"].as_array().unwrap().iter().chain(snap["output"].as_array().unwrap()).map(floats).collect();
    let pts: Vec<Vec<f64>> = p["input"].as_array().unwrap().iter().chain(p["output"].as_array().unwrap()).map(floats).collect();
    assert_eq!(pts.len(), 16);
    let d = |a: &[f64], b: &[f64]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    for i in 0..raw.len() {
        for j in 0..raw.len() {
            assert!((d(&raw[i], &raw[j]) - d(&pts[i], &pts[j])).abs() < 1e-9);
        }
    }
    let ev = floats(&p["explained_variance"]);
    assert!(ev[0] >= ev[1] && ev[1] >= 0.0);

    let (_, again) = call(&app, Method::GET, &format!("/sessions/{id}/pca"), None).await;
    assert_eq!(p, again);
    let (status, q) = call(&app, Method::GET, &format!("/sessions/{id}/pca?basis=input"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(q["basis"], "input");
    let (status, _) = call(&app, Method::GET, &format!("/sessions/{id}/pca?basis=sideways"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn pca_hs_labels_inner_units() {
    let app = router();
    let s = create(&app, json!({ "preset": "repeating", "dim": 3, "objective": "hs" })).await;
    let id = s["id"].as_str().unwrap();
    let (_, p) = call(&app, Method::GET, &format!("/sessions/{id}/pca"), None).await;
    assert_eq!(p["input"].as_array().unwrap().len(), 8);
    assert_eq!(p["output"].as_array().unwrap().len(), 7);
    assert_eq!(p["output_labels"][0], "#0");
}

#[tokio::test]
async fn learning_rate_changes() {
    let app = router();
    let base = json!({ "preset": "repeating", "dim": 3, "mode": "sg", "objective": "softmax", "seed": 5 });
    let mut fast = base.clone();
    fast["eta"] = json!(0.5);
    let mut slow = base;
    slow["eta"] = json!(0.05);
    let a = create(&app, fast).await;
    let b = create(&app, slow).await;
    let id = a["id"].as_str().unwrap();

    for eta in [0.0, -0.1] {
        let (status, v) = call(&app, Method::POST, &format!("/sessions/{id}/eta"), Some(json!({ "eta": eta }))).await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
        assert!(v["error"].is_string());
    }
    let (status, v) = call(&app, Method::POST, &format!("/sessions/{id}/eta"), Some(json!({ "eta": 0.05 }))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["eta"], 0.05);
    let snap = state(&app, id).await;
    assert_eq!(snap["digest"], a["digest"]);
    assert_eq!(snap["eta"], 0.05);

    step(&app, id, 3).await;
    step(&app, b["id"].as_str().unwrap(), 3).await;
    assert_eq!(state(&app, id).await["digest"], state(&app, b["id"].as_str().unwrap()).await["digest"]);
}

#[tokio::test]
async fn neighbors_query() {
    let app = router();
    let s = create(&app, json!({ "preset": "repeating", "dim": 4 })).await;
    let id = s["id"].as_str().unwrap();
    let (status, v) = call(&app, Method::GET, &format!("/sessions/{id}/neighbors?word=fox&k=3"), None).await;
    assert_eq!(status, StatusCode::OK);
    let n = v["neighbors"].as_array().unwrap();
    assert_eq!(n.len(), 3);
    assert!(n.iter().all(|x| x["word"] != "fox"));
    let sims: Vec<f64> = n.iter().map(|x| x["similarity"].as_f64().unwrap()).collect();
    assert!(sims.windows(2).all(|w| w[0] >= w[1]));
    let (_, v) = call(&app, Method::GET, &format!("/sessions/{id}/neighbors?word=fox&k=100"), None).await;
    assert_eq!(v["neighbors"].as_array().unwrap().len(), 7);
    let (status, v) = call(&app, Method::GET, &format!("/sessions/{id}/neighbors?word=cat"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(v["error"].as_str().unwrap().contains("cat"));
}

#[tokio::test]
async fn presets_listed() {
    let (status, v) = call(&router(), Method::GET, "/presets", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(v["names"].as_array().unwrap().contains(&json!("analogy")));
    assert!(v["corpora"]["analogy"].as_str().unwrap().contains("queen"));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn interleaved_sessions_match_serial() {
    let app = router();
    let body = json!({ "preset": "repeating", "dim": 4, "mode": "sg", "objective": "ns", "negative": 3, "seed": 3 });
    let mut ids = Vec::new();
    for _ in 0..3 {
        ids.push(create(&app, body.clone()).await["id"].as_str().unwrap().to_owned());
    }
    let mut tasks = Vec::new();
    for id in ids.clone() {
        let app = app.clone();
        tasks.push(tokio::spawn(async move {
            for n in [5, 17, 1, 30] {
                step(&app, &id, n).await;
                call(&app, Method::GET, &format!("/sessions/{id}/pca"), None).await;
            }
        }));
    }
    for t in tasks {
        t.await.unwrap();
    }
    let serial = create(&app, body).await;
    let sid = serial["id"].as_str().unwrap();
    step(&app, sid, 53).await;
    let want = state(&app, sid).await["digest"].clone();
    for id in &ids {
        let snap = state(&app, id).await;
        assert_eq!(snap["digest"], want);
        assert_eq!(snap["version"], 4);
    }
}
