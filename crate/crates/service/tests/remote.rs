use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use gar_core::fixtures::{demo_bank, demo_store, tv24_mock_clients, tv24_topics, MOCK_DIM};
use gar_core::generation::{generate_variants, GeneratorConfig};
use gar_core::pipeline::{run_gar, PipelineConfig, StoreSet};
use gar_core::trec_io::write_run;
use gar_service::config::GeneratorMode;
use gar_service::{mock_backend_router, router, AppState, ServiceConfig, Session};
use http_body_util::BodyExt;
use tower::ServiceExt;

/// Serves the mock backends on an ephemeral port for the life of the runtime.
fn spawn_backend(rt: &tokio::runtime::Runtime) -> String {
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let addr = listener.local_addr().unwrap();
    let app = mock_backend_router(tv24_mock_clients(MOCK_DIM));
    rt.spawn(async move { axum::serve(listener, app).await.unwrap() });
    format!("http://{addr}")
}

fn remote_config(base: &str) -> ServiceConfig {
    let mut cfg = ServiceConfig::default();
    cfg.generators.mode = GeneratorMode::Remote;
    cfg.generators.t2t = Some(base.to_string());
    cfg.generators.t2i = Some(base.to_string());
    cfg.generators.i2t = Some(base.to_string());
    cfg.generators.embed = Some(base.to_string());
    cfg
}

#[test]
fn remote_clients_match_in_process_mocks() {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let base = spawn_backend(&rt);
    let remote = remote_config(&base).clients(demo_bank()).unwrap();
    let local = tv24_mock_clients(MOCK_DIM);
    let gen_cfg = GeneratorConfig::default();
    let bank = demo_bank();

    for topic in tv24_topics().iter().take(5) {
        let a = generate_variants(topic, &bank, &gen_cfg, &remote.generators).unwrap();
        let b = generate_variants(topic, &bank, &gen_cfg, &local.generators).unwrap();
        assert_eq!(a, b, "topic {}", topic.id);
        let texts = vec![topic.text.clone()];
        assert_eq!(
            remote.embedder.embed_texts(&texts).unwrap(),
            local.embedder.embed_texts(&texts).unwrap()
        );
        assert_eq!(
            remote.embedder.embed_images(&a.t2i_images).unwrap(),
            local.embedder.embed_images(&b.t2i_images).unwrap()
        );
    }

    let stores = StoreSet::single(Arc::new(demo_store(MOCK_DIM)));
    let mut cfg = PipelineConfig::new("remote", stores);
    cfg.k = 20;
    cfg.cutoff = 20;
    let topics = &tv24_topics()[..3];
    let over_wire = run_gar(topics, &cfg, &remote).unwrap();
    let in_process = run_gar(topics, &cfg, &local).unwrap();
    assert_eq!(write_run(&over_wire.fused), write_run(&in_process.fused));
}

#[test]
fn backend_rejects_bad_image_payload() {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let base = spawn_backend(&rt);
    let resp = ureq::post(&format!("{base}/i2t")).send_json(serde_json::json!({"image": "***"}));
    match resp {
        Err(ureq::Error::Status(code, _)) => assert_eq!(code, 400),
        other => panic!("expected 400, got {other:?}"),
    }
}

async fn send(app: &axum::Router, method: &str, uri: &str, body: &str) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

#[tokio::test]
async fn sessions_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("service.toml");
    std::fs::write(&cfg_path, "journal = \"sessions.jsonl\"\n").unwrap();
    let cfg = ServiceConfig::load(&cfg_path).unwrap();

    let first = router(Arc::new(AppState::from_config(&cfg).unwrap()));
    let (status, body) = send(&first, "POST", "/topics/770/variants", "").await;
    assert_eq!(status, StatusCode::OK);
    let id = serde_json::from_slice::<serde_json::Value>(&body).unwrap()["session_id"]
        .as_str()
        .unwrap()
        .to_string();
    let (status, _) = send(
        &first,
        "POST",
        &format!("/sessions/{id}/select"),
        r#"{"channel":"t2t","candidate_index":0}"#,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    drop(first);

    let second = router(Arc::new(AppState::from_config(&cfg).unwrap()));
    let (status, body) = send(&second, "GET", &format!("/sessions/{id}"), "").await;
    assert_eq!(status, StatusCode::OK);
    let s: Session = serde_json::from_slice(&body).unwrap();
    assert_eq!(s.topic.id, 770);
    assert_eq!(s.selections.len(), 1);
    // new sessions do not reuse the recovered id
    let (_, body) = send(&second, "POST", "/topics/751/variants", "").await;
    let next = serde_json::from_slice::<serde_json::Value>(&body).unwrap()["session_id"].clone();
    assert_ne!(next.as_str().unwrap(), id);
}
