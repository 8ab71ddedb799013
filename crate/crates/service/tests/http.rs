use std::collections::BTreeMap;
use std::sync::Arc;

use altereval_core::judgments::parse_qrels;
use altereval_core::pooling::{Pool, PoolCandidate, SourceKind};
use altereval_core::ItemId;
use altereval_service::{router, Ack, JudgingStore, JudgingTask, Progress};
use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use tower::ServiceExt;

fn id(s: &str) -> ItemId {
    ItemId::new(s).unwrap()
}

fn fixture(dir: &std::path::Path) -> Router {
    let pools: Vec<Pool> = ["a", "b", "c"]
        .iter()
        .map(|t| Pool {
            target_id: id(t),
            candidates: (1..=14)
                .map(|i| PoolCandidate {
                    item_id: id(&format!("{t}{i}")),
                    source_system: "s".into(),
                    source_kind: SourceKind::Retrieved,
                    source_rank: i,
                })
                .collect(),
        })
        .collect();
    let store = JudgingStore::open(dir.join("data"), BTreeMap::from([("dresses".into(), pools)]), "synthetic:{id}")
        .unwrap();
    let ui = dir.join("ui");
    std::fs::create_dir_all(&ui).unwrap();
    std::fs::write(ui.join("index.html"), "<html>judge</html>").unwrap();
    router(Arc::new(store), Some(ui))
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, body)
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn post(uri: &str, json: serde_json::Value) -> Request<Body> {
    Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(json.to_string()))
        .unwrap()
}

fn submission(worker: &str, task: &JudgingTask, selected: &[&ItemId], justification: &str) -> serde_json::Value {
    serde_json::json!({
        "worker_id": worker,
        "target_id": task.target_id,
        "selected": selected,
        "justification": justification,
        "duration_ms": 5300,
        "timestamp": "2024-05-01T12:00:00Z",
    })
}

#[tokio::test]
async fn judging_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let app = fixture(dir.path());

    let (status, body) = call(&app, get("/api/categories")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(serde_json::from_slice::<Vec<String>>(&body).unwrap(), vec!["dresses"]);

    let mut expected: BTreeMap<ItemId, Vec<ItemId>> = BTreeMap::new();
    for round in 0..3 {
        let (status, body) = call(&app, get("/api/tasks/next?category=dresses&worker=w1")).await;
        assert_eq!(status, StatusCode::OK);
        let task: JudgingTask = serde_json::from_slice(&body).unwrap();
        assert_eq!(task.candidates.len(), 14);

        let (status, body) = call(&app, post("/api/judgments", submission("w1", &task, &[], "ok"))).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
        let ack: Ack = serde_json::from_slice(&body).unwrap();
        assert!(ack.reason.unwrap().starts_with("attention check failed"));

        // first target gets two selections, the second none, the third one
        let picks: Vec<&ItemId> = task.candidates.iter().take([2, 0, 1][round]).collect();
        let text = "These look like the same style in a similar colour.";
        let (status, body) = call(&app, post("/api/judgments", submission("w1", &task, &picks, text))).await;
        assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
        assert_eq!(serde_json::from_slice::<Ack>(&body).unwrap(), Ack::accepted());

        let (status, _) = call(&app, post("/api/judgments", submission("w1", &task, &picks, text))).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
        expected.insert(task.target_id.clone(), picks.into_iter().cloned().collect());
    }

    let (status, _) = call(&app, get("/api/tasks/next?category=dresses&worker=w1")).await;
    assert_eq!(status, StatusCode::NO_CONTENT);

    let (status, body) = call(&app, get("/api/progress?category=dresses")).await;
    assert_eq!(status, StatusCode::OK);
    let p: Progress = serde_json::from_slice(&body).unwrap();
    assert_eq!((p.n_targets, p.n_judged_targets, p.n_annotations, p.n_workers), (3, 3, 3, 1));

    let (status, body) = call(&app, get("/api/export?category=dresses")).await;
    assert_eq!(status, StatusCode::OK);
    let qrels = parse_qrels(std::path::Path::new("dresses.qrels"), std::str::from_utf8(&body).unwrap()).unwrap();
    assert_eq!(qrels.n_targets(), 3);
    for (target, picks) in &expected {
        let got: Vec<ItemId> = qrels.alternatives(target).cloned().collect();
        assert_eq!(&got, picks);
        assert_eq!(qrels.judgments(target).unwrap().len(), 14);
    }
}

#[tokio::test]
async fn errors_and_static_files() {
    let dir = tempfile::tempdir().unwrap();
    let app = fixture(dir.path());
    let (status, _) = call(&app, get("/api/tasks/next?category=bags&worker=w1")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, get("/api/tasks/next?category=dresses")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, get("/api/export?category=dresses")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, body) = call(&app, get("/index.html")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, b"<html>judge</html>");
}
